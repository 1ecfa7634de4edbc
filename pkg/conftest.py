"""Configure Django before pytest collects the Django-style tests.py modules."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "autoamg.settings")
django.setup()
