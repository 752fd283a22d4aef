import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dlaperf.settings')
django.setup()
