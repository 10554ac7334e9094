from django.apps import AppConfig


class ScoringConfig(AppConfig):
    name = 'Scoring'
    verbose_name = 'Paper innovation scoring'
