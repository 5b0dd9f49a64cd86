from django.apps import AppConfig


class LifecycleConfig(AppConfig):
    name = 'metawears.lifecycle'
    verbose_name = 'MetaWearS Lifecycle'
