from django.core.management.base import BaseCommand, CommandError

from core.ledger import chain_summary
from core.services import LedgerService


class Command(BaseCommand):
    help = 'Hyperledger utilities'

    def add_arguments(self, parser):
        subcommands = parser.add_subparsers(dest='action', required=True)
        verify = subcommands.add_parser('verify', help='Check every hash and link of a chain file')
        verify.add_argument('chain_file')

    def handle(self, *args, **options):
        if options['action'] == 'verify':
            self.verify(options['chain_file'])

    def verify(self, path):
        checked, error = LedgerService.verify_file(path)
        if error:
            raise CommandError(f"{path}: {error}", returncode=2)

        chain, status = checked
        if not status:
            raise CommandError(f"{path}: chain invalid at block {status.at_index}", returncode=1)

        summary = chain_summary(chain)
        self.stdout.write(self.style.SUCCESS(
            f"{path}: valid, {summary['length']} blocks, {summary['records']} records, "
            f"tip {summary['tip_index']} {summary['tip_hash']}"
        ))
