import click

from commands import build_config, execute, simulation_options
from services.simnet import SENDER_POLICIES


@click.command('broadcast')
@simulation_options
@click.option('--senders', type=int, help='Number of concurrent senders.')
@click.option('--message-len', type=int, help='Payload length in bytes.')
@click.option('--sender-policy', type=click.Choice(SENDER_POLICIES), help='Behaviour of one Byzantine sender.')
def broadcast_cmd(report_path, trace, db_url, **options):
    """Run the extended broadcast channel with several senders."""
    config = build_config('broadcast', **options)
    execute(config, report_path, trace, db_url)
