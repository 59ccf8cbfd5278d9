import click

from commands import build_config, execute, simulation_options


@click.command('dkg')
@simulation_options
def dkg_cmd(report_path, trace, db_url, **options):
    """Run one Any-Trust DKG session and check its invariants."""
    config = build_config('dkg', **options)
    execute(config, report_path, trace, db_url)
