import click

from commands import build_config, execute, handles_errors, simulation_options
from services.weights import read_weights


@click.command('checkpoint')
@simulation_options
@click.option('--epochs', type=int, help='Checkpoint epochs after genesis.')
@click.option('--weights-file', type=click.Path(exists=True, dir_okay=False),
              help='Validator weights, one integer per line.')
@click.option('--no-attack', is_flag=True, help='Skip the long-range attack attempt.')
@handles_errors
def checkpoint_cmd(report_path, trace, db_url, weights_file, no_attack, **options):
    """Checkpoint epochs: weighted DKG, threshold Schnorr spend chain, bootstrap check."""
    if weights_file:
        weights = read_weights(weights_file)
        if options.get('n') not in (None, weights.n):
            raise click.UsageError(f'--n {options["n"]} disagrees with {weights.n} weights in {weights_file}')
        options.update(n=weights.n, weights=weights.w)
    if no_attack:
        options['long_range_attack'] = False
    config = build_config('checkpoint', **options)
    execute(config, report_path, trace, db_url)
