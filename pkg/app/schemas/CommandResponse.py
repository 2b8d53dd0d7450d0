from pydantic import BaseModel, ConfigDict
from typing import Any, Optional


class CommandResponse(BaseModel):
    data: Optional[Any] = None
    success: bool
    error: Optional[str] = None

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "data": {},
                "success": True,
                "error": None
            }
        }
    )
