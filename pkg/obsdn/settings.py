import os
from pathlib import Path


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def env_flag(name, default="0"):
    return os.environ.get(name, default).strip().lower() in ("1", "true", "yes", "on")


# Only used by Django internals; nothing here is served.
SECRET_KEY = os.environ.get("SECRET_KEY", "obsdn-local-toolkit-key")

DEBUG = env_flag("DEBUG", "0")

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'tensorcore',
    'denoiser',
    'dataset',
    'projection',
    'attack',
    'training',
    'evaluation',
    'cli',
]

# No database: every artifact is a file under the run directory.
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# TOOLKIT SETTINGS
OBSDN_OUTPUT_DIR = Path(os.environ.get("OBSDN_OUTPUT_DIR", BASE_DIR / "runs"))
OBSDN_LOG_LEVEL = os.environ.get("OBSDN_LOG_LEVEL", "INFO").upper()
OBSDN_THREADS = int(os.environ.get("OBSDN_THREADS", "1"))

# Dykstra oracle used by the projection checks
OBSDN_DYKSTRA_MAX_ITERS = int(os.environ.get("OBSDN_DYKSTRA_MAX_ITERS", "10000"))
OBSDN_DYKSTRA_TOL = float(os.environ.get("OBSDN_DYKSTRA_TOL", "1e-12"))


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        name: {
            'handlers': ['console'],
            'level': OBSDN_LOG_LEVEL,
            'propagate': False,
        }
        for name in INSTALLED_APPS[1:] + ['obsdn']
    },
}


# Celery Configuration Options
CELERY_BROKER_URL = os.environ.get("CELERY_BROKER_URL", "memory://")
CELERY_RESULT_BACKEND = os.environ.get("CELERY_RESULT_BACKEND", "cache+memory://")
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
CELERY_TASK_ALWAYS_EAGER = env_flag("CELERY_TASK_ALWAYS_EAGER", "1")
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 60 * 60
