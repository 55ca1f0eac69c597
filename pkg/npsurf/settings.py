"""
Django settings for the npsurf project.

The project has no web surface and no database: Django provides the
management-command CLI, the settings layer and the test runner. Everything
else lives in the ``surfaces`` app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

from pathlib import Path
import os

from dotenv import load_dotenv


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load .env if present (safe no-op when file is absent)
load_dotenv(BASE_DIR / ".env")

# Only used by Django internals; nothing here is served or signed.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "npsurf-local-only")

DEBUG = os.getenv("DJANGO_DEBUG", "False").lower() == "true"

ALLOWED_HOSTS: list[str] = []

# Application definition

INSTALLED_APPS = [
    "surfaces",
]

DATABASES: dict = {}

USE_TZ = True


# Neural parametric surface defaults
# Seed fallback when neither --seed nor the config file provide one.
NPS_SEED = int(os.getenv("NPS_SEED", "0"))

# Default cap on torch intra-op threads; None leaves torch's own default.
threads_env = os.getenv("NPS_THREADS")
NPS_THREADS = int(threads_env) if threads_env else None

NPS_LOG_LEVEL = os.getenv("NPS_LOG_LEVEL", "INFO").upper()


# Logging
# https://docs.djangoproject.com/en/6.0/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "{levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "surfaces": {
            "handlers": ["console"],
            "level": NPS_LOG_LEVEL,
            "propagate": False,
        },
        "npsurf": {
            "handlers": ["console"],
            "level": NPS_LOG_LEVEL,
            "propagate": False,
        },
    },
}
