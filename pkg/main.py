"""
Main entry point for the WDAIL imitation learning lab.
"""

import logging
import os
import sys
from typing import List, Optional

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.cli import build_parser, run  # noqa: E402
from src.utils.config_manager import ConfigManager  # noqa: E402

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


def setup_logging(level_name: str) -> None:
    """Configure the root logger once for the whole process."""
    level = getattr(logging, str(level_name).upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)

    # Load app configuration
    config_manager = ConfigManager(args.config_dir)
    app_config = config_manager.load_app_config()
    setup_logging(args.log_level or app_config.get("log_level", "INFO"))
    logger.info(f"{app_config['app_title']} {app_config['version']}")

    return run(args, app_config, config_manager)


if __name__ == "__main__":
    sys.exit(main())
