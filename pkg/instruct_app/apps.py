from django.apps import AppConfig


class InstructAppConfig(AppConfig):
    name = 'instruct_app'
    verbose_name = 'Diff-Instruct Lab'
