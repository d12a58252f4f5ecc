import os

import django

# Mirror manage.py so pytest can collect the Django SimpleTestCase suite.
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'diff_instruct_lab.settings')
django.setup()
