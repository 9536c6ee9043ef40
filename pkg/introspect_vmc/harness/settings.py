"""
Django settings for the ivmc command-line driver.

Only the pieces the management commands use are configured: the harness app,
logging and the default output directory. There is no database.
"""

import os
from typing import Any, Dict, Optional

SECRET_KEY = os.getenv('IVMC_SECRET_KEY', 'introspect-vmc-local-only')

DEBUG = False

INSTALLED_APPS = [
    'introspect_vmc.harness',
]

DATABASES: Dict[str, Any] = {}

USE_TZ = True

# Default root for run artifacts when --out is not given
IVMC_OUTPUT_DIR = os.getenv('IVMC_OUTPUT_DIR', os.path.join(os.getcwd(), 'runs', 'default'))

# Default worker processes for episode-level parallelism
IVMC_WORKERS = int(os.getenv('IVMC_WORKERS', '1'))


def build_logging(log_dir: Optional[str] = None, level: str = 'INFO') -> Dict[str, Any]:
    """dictConfig for the pipeline; a rotating file handler is added when ``log_dir`` is set."""
    handlers: Dict[str, Any] = {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
            'stream': 'ext://sys.stderr',
        },
    }
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        handlers['file'] = {
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': os.path.join(log_dir, 'ivmc.log'),
            'maxBytes': 1024 * 1024 * 10,  # 10 MB
            'backupCount': 5,
            'formatter': 'verbose',
        }
    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'verbose': {
                'format': '{levelname} {asctime} {name} {process:d} {message}',
                'style': '{',
            },
            'simple': {
                'format': '{levelname} {message}',
                'style': '{',
            },
        },
        'handlers': handlers,
        'loggers': {
            'introspect_vmc': {
                'handlers': list(handlers),
                'level': level,
                'propagate': False,
            },
            'django': {
                'handlers': ['console'],
                'level': 'WARNING',
                'propagate': False,
            },
        },
    }


LOGGING = build_logging(os.getenv('IVMC_LOG_DIR'), os.getenv('IVMC_LOG_LEVEL', 'INFO'))
