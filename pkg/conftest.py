import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Innovation.settings')
django.setup()
