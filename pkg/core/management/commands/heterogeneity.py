from django.core.management.base import BaseCommand, CommandError

from core.services import HeterogeneityService


class Command(BaseCommand):
    help = 'Print the heterogeneity H of per-worker update times'

    def add_arguments(self, parser):
        parser.add_argument('times', nargs='*', help='update times in seconds')
        parser.add_argument('--file', help='read times from a file (whitespace or comma separated)')

    def handle(self, *args, **options):
        if options['file'] and options['times']:
            raise CommandError('pass times as arguments or --file, not both', returncode=2)

        if options['file']:
            values, error = HeterogeneityService.read_times_file(options['file'])
        else:
            values, error = HeterogeneityService.parse_times(options['times'])
        if error:
            raise CommandError(error, returncode=2)

        h, error = HeterogeneityService.compute(values)
        if error:
            raise CommandError(error, returncode=2)
        self.stdout.write(f'{h:.6f}')
