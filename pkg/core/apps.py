from django.apps import AppConfig


class CoreConfig(AppConfig):
    """Fog clients, cloud server, hyperledger and their run registry"""
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core'
    verbose_name = 'Fog federated learning'
