import click

from commands import handles_errors
from services.weights import (
    allocate_sub_ids, check_qualified, format_allocation, perfect_allocation_size, read_weights, size_bound,
)


@click.command('allocate')
@click.argument('weights_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--compare', is_flag=True, help='Also print the exact-gcd allocation size.')
@click.option('--check/--no-check', default=True, help='Verify the qualified-allocation property.')
@handles_errors
def allocate_cmd(weights_file, compare, check):
    """Assign sub-IDs to weighted validators."""
    weights = read_weights(weights_file)
    allocation = allocate_sub_ids(weights)
    click.echo(format_allocation(weights, allocation), nl=False)
    click.echo(f'total weight {weights.total}, t={weights.t}, divisor {allocation.divisor}, '
               f'{allocation.sub_ids} sub-IDs')
    bound = size_bound(weights)
    if bound is not None:
        click.echo(f'size bound (4t+1)/floor(2t/n) = {bound:.2f}')
    if compare:
        click.echo(f'perfect allocation: {perfect_allocation_size(weights)} sub-IDs')
    if check:
        qualified = check_qualified(weights, allocation.d)
        click.echo(f'qualified: {"yes" if qualified else "NO"}')
        if not qualified:
            raise click.ClickException('allocation is not qualified')
