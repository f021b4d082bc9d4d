# obsdn/celery.py
import os

from celery import Celery

# Set the default Django settings module for the 'celery' program.
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'obsdn.settings')

app = Celery('obsdn')

# Eager unless CELERY_TASK_ALWAYS_EAGER is switched off in the environment.
app.config_from_object('django.conf:settings', namespace='CELERY')

app.autodiscover_tasks()
