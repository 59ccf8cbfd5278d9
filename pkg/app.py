import logging

import click

from commands.allocate import allocate_cmd
from commands.bench import bench_cmd
from commands.broadcast import broadcast_cmd
from commands.checkpoint import checkpoint_cmd
from commands.dkg import dkg_cmd
from config import Config


def configure_logging(level=None, fmt=None):
    level = (level or Config.LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=fmt or Config.LOG_FORMAT, force=True)


def create_app():
    @click.group(context_settings={'help_option_names': ['-h', '--help']})
    @click.option('--log-level', default=None, help=f'Logging level [{Config.LOG_LEVEL}].')
    @click.option('--log-format', default=None, help='logging format string.')
    def app(log_level, log_format):
        """Any-Trust DKG simulator: dkg, broadcast, checkpoint, allocate, bench."""
        configure_logging(log_level, log_format)

    # Register commands
    app.add_command(dkg_cmd)
    app.add_command(broadcast_cmd)
    app.add_command(checkpoint_cmd)
    app.add_command(allocate_cmd)
    app.add_command(bench_cmd)

    return app


app = create_app()

if __name__ == '__main__':
    app()
