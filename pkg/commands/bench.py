import json
import logging
import os

import click

from commands import default_report_path, handles_errors
from services.charts import write_chart
from services.reporting import broadcast_bytes
from services.simnet import SimConfig, run
from utils import parse_int_list

logger = logging.getLogger(__name__)


@click.command('bench')
@click.option('--sizes', default='64,128', show_default=True, help='Comma-separated node counts.')
@click.option('--seed', type=int, default=1, show_default=True)
@click.option('--s-expected', type=int, default=20, show_default=True)
@click.option('--bad-adversary', default='half-malform', show_default=True, help='Policy for the bad case.')
@click.option('--broadcast-mode', type=click.Choice(['extended', 'pbb']), default='pbb', show_default=True)
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), help='Rows as line-delimited JSON.')
@click.option('--chart', 'chart_path', type=click.Path(dir_okay=False), help='Write a plotly HTML chart here.')
@handles_errors
def bench_cmd(sizes, seed, s_expected, bad_adversary, broadcast_mode, report_path, chart_path):
    """Good- and bad-case DKG cost against n."""
    try:
        ns = parse_int_list(sizes)
    except ValueError:
        raise click.UsageError(f'--sizes must list integers, got {sizes!r}') from None
    if not ns:
        raise click.UsageError('--sizes is empty')

    rows = []
    for n in ns:
        for case, adversary in (('good', 'honest'), ('bad', bad_adversary)):
            config = SimConfig(scenario='dkg', n=n, seed=seed, adversary=adversary,
                               s_expected=min(s_expected, n), broadcast_mode=broadcast_mode)
            report = run(config)
            totals = broadcast_bytes(report)
            rows.append({'case': case, 'n': n, 't': config.t, 'seed': seed,
                         'exp_per_node': report.exp_per_node(),
                         'broadcast_bytes': totals['broadcast'], 'pbb_bytes': totals['pbb'],
                         'multicast_bytes': totals['multicast']})
            logger.info(f'bench n={n} {case}: exp/node={rows[-1]["exp_per_node"]}')

    click.echo('case\tn\texp/node\tbroadcast\tpbb\tmulticast')
    for row in rows:
        click.echo(f'{row["case"]}\t{row["n"]}\t{row["exp_per_node"]}\t{row["broadcast_bytes"]}\t'
                   f'{row["pbb_bytes"]}\t{row["multicast_bytes"]}')

    report_path = report_path or default_report_path('bench')
    directory = os.path.dirname(report_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(report_path, 'w') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + '\n')
    click.echo(f'rows written to {report_path}')
    if chart_path:
        write_chart(rows, chart_path)
        click.echo(f'chart written to {chart_path}')
