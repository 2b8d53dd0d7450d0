import logging
import sys
from typing import List, Optional
from dotenv import load_dotenv
from app.config.Settings import get_settings
from app.controllers import Lab

load_dotenv()


def main(argv: Optional[List[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return Lab.main(argv)


if __name__ == "__main__":
    sys.exit(main())
