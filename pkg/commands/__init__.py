"""
Command-line commands. Each module exposes one click command that
app.create_app() registers on the top-level group.
"""
import functools
import logging

import click

from config import Config
from models import RunRecord, init_db
from services.errors import AnyTrustError, ConfigError
from services.reporting import write_report
from services.simnet import SimConfig, load_sim_config, run

logger = logging.getLogger(__name__)


def simulation_options(func):
    """Flags shared by the dkg, broadcast and checkpoint commands"""
    options = [
        click.option('--n', 'n', type=int, help='Number of nodes.'),
        click.option('--t', 't', type=int, help='Corruption bound, default floor((n-1)/2).'),
        click.option('--seed', type=int, help='Seed that fully determines the run.'),
        click.option('--adversary', help='Adversary policy name.'),
        click.option('--s-expected', type=int, help='Expected any-trust committee size.'),
        click.option('--c-expected', type=int, help='Expected honest-majority committee size.'),
        click.option('--probabilistic', is_flag=True, default=None,
                     help='Use VRF sortition ratios instead of forced committees.'),
        click.option('--auto-ratio', is_flag=True, default=None,
                     help='Derive sortition ratios from the failure bound.'),
        click.option('--broadcast-mode', type=click.Choice(['extended', 'pbb'])),
        click.option('--pbb-backend', type=click.Choice(['memory', 'sql'])),
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='key=value simulation config file.'),
        click.option('--report', 'report_path', type=click.Path(dir_okay=False),
                     help='Write line-delimited JSON records here.'),
        click.option('--trace', is_flag=True, help='Also write the message trace next to the report.'),
        click.option('--db', 'db_url', help='SQLAlchemy URL of the run ledger.'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(scenario, n=None, t=None, seed=None, adversary=None, s_expected=None, c_expected=None,
                 probabilistic=None, auto_ratio=None, broadcast_mode=None, pbb_backend=None,
                 config_path=None, **extra):
    overrides = dict(scenario=scenario, n=n, t=t, seed=seed, adversary=adversary, s_expected=s_expected,
                     c_expected=c_expected, auto_ratio=auto_ratio, broadcast_mode=broadcast_mode,
                     pbb_backend=pbb_backend, **extra)
    if probabilistic:
        overrides['forced_sortition'] = False
    try:
        if config_path:
            return load_sim_config(config_path, **overrides)
        return SimConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (ConfigError, TypeError) as e:
        raise click.UsageError(str(e)) from None


def execute(config, report_path=None, trace=False, db_url=None):
    """Run, print the summary, write the report; failures exit with status 1"""
    if trace and not report_path:
        raise click.UsageError('--trace needs --report')
    try:
        report = run(config, strict=False)
    except AnyTrustError as e:
        raise click.ClickException(str(e)) from None

    click.echo(report.summary())
    if report_path:
        write_report(report, report_path, trace=trace)
    if db_url:
        Session = init_db(db_url)
        with Session.begin() as session:
            session.add(RunRecord.from_report(report, report.digest()))
        logger.info(f'run recorded in {db_url}')
    try:
        report.raise_on_failure()
    except AnyTrustError as e:
        raise click.ClickException(str(e)) from None
    return report


def handles_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            raise click.UsageError(str(e)) from None
        except AnyTrustError as e:
            raise click.ClickException(str(e)) from None
    return wrapper


def default_report_path(name):
    return f'{Config.REPORT_DIR}/{name}.jsonl'
