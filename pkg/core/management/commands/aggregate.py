from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.services import AggregationService

from ._options import float_list


class Command(BaseCommand):
    help = 'Fuse FGFW weight files with accuracy-boosted averaging'

    def add_arguments(self, parser):
        parser.add_argument('weights', nargs='+', help='weight files, one per fog client')
        parser.add_argument('--accuracies', type=float_list,
                            help='comma-separated reported accuracies, in file order')
        parser.add_argument('--boost', type=float, default=settings.SIMULATION_DEFAULTS['boost'])
        parser.add_argument('--out', required=True, help='fused weight file to write')

    def handle(self, *args, **options):
        if not options['accuracies']:
            raise CommandError('--accuracies is required', returncode=2)

        fused, error = AggregationService.fuse_files(
            options['weights'], options['accuracies'], options['boost'], options['out']
        )
        if error:
            raise CommandError(error, returncode=1)

        for path, factor in zip(options['weights'], fused['factors']):
            self.stdout.write(f'{path}: {factor:.6f}')
        self.stdout.write(self.style.SUCCESS(f"Wrote {fused['path']} (sha256 {fused['digest']})"))
