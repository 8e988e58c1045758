from django.core.management.base import BaseCommand, CommandError

from core.services import ConfigService, TrainingService

from ._options import add_config_arguments, collect_overrides


class Command(BaseCommand):
    help = 'Train a single fog client for one round and write its weights and history'

    def add_arguments(self, parser):
        add_config_arguments(parser, sweep=False)
        parser.add_argument('--client', type=int, default=1, help='fog client id, 1..clients')

    def handle(self, *args, **options):
        resolved, error = ConfigService.resolve(options.get('config'), collect_overrides(options))
        if error:
            raise CommandError(error, returncode=2)

        trained, error = TrainingService.train_single(resolved, options['client'])
        if error:
            raise CommandError(error, returncode=1)

        self.stdout.write(f"client {options['client']} accuracy {trained['accuracy']:.6f}")
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {trained['weights_path']} and {trained['history_path']}"
        ))
