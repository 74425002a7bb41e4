import logging
import logging.handlers
import sys
from pathlib import Path
from datetime import datetime


def setup_logging(log_level=logging.INFO, log_dir=None, journal=False):
    """
    Setup logging for the spdevol toolkit

    Args:
        log_level: Logging level (default: INFO)
        log_dir: Directory for rotating log files (default: console only)
        journal: Also send records to the systemd journal when available
    """

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
    )

    simple_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Clear existing handlers
    root_logger.handlers.clear()

    # Diagnostics always go to stderr, data goes to files or stdout
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(simple_formatter)
    root_logger.addHandler(console_handler)

    log_file = None
    if log_dir is not None:
        log_dir = Path(log_dir).expanduser()
        log_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime('%Y%m%d')
        log_file = log_dir / f"spdevol_{timestamp}.log"

        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(file_handler)

    if journal:
        try:
            from systemd.journal import JournalHandler
            journal_handler = JournalHandler(SYSLOG_IDENTIFIER='spdevol')
            journal_handler.setLevel(logging.INFO)
            journal_handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
            root_logger.addHandler(journal_handler)
            logging.debug("Journal logging enabled")
        except ImportError:
            logging.warning("systemd.journal not available, journal logging disabled")

    if log_file is not None:
        logging.debug(f"Logging system initialized. Log file: {log_file}")
    logging.debug(f"Log level set to: {logging.getLevelName(log_level)}")

    return root_logger
