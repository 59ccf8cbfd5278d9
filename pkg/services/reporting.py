"""
Run reports: verdicts, outputs, cost counters and the message trace, as
line-delimited JSON records and a short human summary.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

from services.errors import InvariantViolation
from services.metrics import CHANNELS, EXCLUDED_PHASES

logger = logging.getLogger(__name__)


@dataclass
class Report:
    config: object
    metrics: object
    verdicts: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    honest: tuple = ()
    trace: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def verdict(self, name, ok, detail=''):
        self.verdicts[name] = bool(ok) and self.verdicts.get(name, True)
        if not ok:
            self.failures.setdefault(name, detail)
            logger.warning(f'verdict {name} failed: {detail}')

    @property
    def ok(self):
        return all(self.verdicts.values())

    def raise_on_failure(self):
        for name, ok in self.verdicts.items():
            if not ok:
                raise InvariantViolation(name, self.failures.get(name, ''))

    def exp_per_node(self):
        """Largest per-node exponentiation count among honest nodes, sortition and audit excluded"""
        return self.metrics.max_node_exp(self.honest)

    def _record(self, phase, metric, value):
        c = self.config
        return {'scenario': c.scenario, 'n': c.n, 't': c.t, 'seed': c.seed,
                'phase': phase, 'metric': metric, 'value': value}

    def to_records(self):
        records = [self._record('config', 'adversary', self.config.adversary)]
        for name in sorted(self.verdicts):
            records.append(self._record('verdict', name, self.verdicts[name]))
        for name in sorted(self.outputs):
            records.append(self._record('output', name, self.outputs[name]))
        for (node, phase), count in sorted(self.metrics.exp.items()):
            records.append(self._record(phase, f'exp.node.{node}', count))
        for phase, count in self.metrics.phase_totals().items():
            records.append(self._record(phase, 'exp.total', count))
        records.append(self._record('cost', 'exp.per_node', self.exp_per_node()))
        for channel, size in broadcast_bytes(self).items():
            records.append(self._record('channel', channel, size))
        if self.config.include_timings:
            for phase, seconds in sorted(self.metrics.phase_seconds.items()):
                records.append(self._record(phase, 'seconds', round(seconds, 6)))
        return records

    def to_jsonl(self):
        return ''.join(json.dumps(r, sort_keys=True, separators=(',', ':')) + '\n' for r in self.to_records())

    def trace_jsonl(self):
        return ''.join(json.dumps(r.to_dict(), sort_keys=True, separators=(',', ':')) + '\n' for r in self.trace)

    def digest(self):
        return hashlib.sha256((self.to_jsonl() + self.trace_jsonl()).encode('utf-8')).hexdigest()

    def summary(self):
        c = self.config
        lines = [f'{c.scenario}: n={c.n} t={c.t} seed={c.seed} adversary={c.adversary}']
        for name in sorted(self.verdicts):
            lines.append(f'  {name:<24} {"ok" if self.verdicts[name] else "FAILED"}')
        lines.append(f'  per-node EXP (excl. {", ".join(EXCLUDED_PHASES)}): {self.exp_per_node()}')
        for channel, size in broadcast_bytes(self).items():
            lines.append(f'  {channel:<24} {size} bytes')
        for name in ('pk', 'qual', 'disqualified', 'dealers', 'final', 'digest', 'transactions'):
            if name in self.outputs:
                lines.append(f'  {name:<24} {self.outputs[name]}')
        return '\n'.join(lines)


def broadcast_bytes(report):
    """Logical broadcast payload plus what was stored on the board, multicast and fetched from the DDN"""
    totals = {channel: report.metrics.channel_bytes.get(channel, 0) for channel in CHANNELS}
    totals['pbb_entries'] = report.metrics.channel_messages.get('pbb', 0)
    return totals


def write_report(report, path, trace=False):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        f.write(report.to_jsonl())
    if trace:
        with open(path + '.trace.jsonl', 'w') as f:
            f.write(report.trace_jsonl())
    logger.info(f'report written to {path}')
    return path
