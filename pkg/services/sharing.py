"""
Polynomial secret sharing over Z_p: sampling, evaluation commitments,
the dual-code low-degree test and Lagrange interpolation.
"""
from dataclasses import dataclass

from services.errors import DecodingError
from services.group_crypto import GroupElement, POINT_BYTES, Scalar
from utils import ByteReader, u32


@dataclass(frozen=True)
class SharePolynomial:
    coeffs: tuple

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def secret(self):
        return self.coeffs[0]

    def evaluate(self, x):
        """Horner evaluation at an integer or Scalar point"""
        x = x if isinstance(x, Scalar) else Scalar(x)
        acc = Scalar(0)
        for a in reversed(self.coeffs):
            acc = acc * x + a
        return acc

    def evaluations(self, n):
        """f(0), f(1), ..., f(n)"""
        return [self.evaluate(j) for j in range(n + 1)]

    def __add__(self, other):
        size = max(len(self.coeffs), len(other.coeffs))
        ours = list(self.coeffs) + [Scalar(0)] * (size - len(self.coeffs))
        theirs = list(other.coeffs) + [Scalar(0)] * (size - len(other.coeffs))
        return SharePolynomial(tuple(a + b for a, b in zip(ours, theirs)))

    def __repr__(self):
        return f'<SharePolynomial degree={self.degree}>'


@dataclass(frozen=True)
class EvalCommitment:
    cms: tuple

    def __len__(self):
        return len(self.cms)

    def __getitem__(self, j):
        return self.cms[j]

    def to_bytes(self):
        return u32(len(self.cms)) + b''.join(cm.to_bytes() for cm in self.cms)

    @classmethod
    def from_reader(cls, reader):
        count = reader.read_u32()
        if count * POINT_BYTES > reader.remaining:
            raise DecodingError(f'commitment count {count} exceeds the message')
        return cls(tuple(GroupElement.from_bytes(reader.read(POINT_BYTES)) for _ in range(count)))

    @classmethod
    def from_bytes(cls, data):
        reader = ByteReader(data)
        commitment = cls.from_reader(reader)
        reader.expect_end()
        return commitment

    def __mul__(self, other):
        """Elementwise group product: the commitment of the summed polynomials"""
        if len(self) != len(other):
            raise ValueError('commitment lengths differ')
        return EvalCommitment(tuple(a + b for a, b in zip(self.cms, other.cms)))


@dataclass(frozen=True)
class DualCodeVector:
    perp: tuple

    def __len__(self):
        return len(self.perp)


def sample_polynomial(t, rng=None):
    if t < 0:
        raise ValueError('degree must be non-negative')
    return SharePolynomial(tuple(Scalar.random(rng) for _ in range(t + 1)))


def commit_evals(f, n):
    if n < f.degree + 1:
        raise ValueError(f'need n >= t+1, got n={n} t={f.degree}')
    return EvalCommitment(tuple(GroupElement.base(v) for v in f.evaluations(n)))


def _inverse_weights(n):
    """1 / prod_{j != tau} (tau - j) over the points 0..n"""
    fact = [Scalar(1)]
    for k in range(1, n + 1):
        fact.append(fact[-1] * k)
    weights = []
    for tau in range(n + 1):
        denom = fact[tau] * fact[n - tau]
        if (n - tau) % 2:
            denom = -denom
        weights.append(denom.inv())
    return weights


def dual_code_vector(n, t, rng=None):
    """
    Random codeword of the dual of the degree-<=t Reed-Solomon code on the
    points 0..n. The random polynomial q has degree n-t-1, the largest
    degree for which every degree-<=t evaluation vector stays orthogonal.
    """
    if not 0 <= t < n:
        raise ValueError(f'need 0 <= t < n, got n={n} t={t}')
    q = sample_polynomial(n - t - 1, rng)
    return DualCodeVector(tuple(q.evaluate(tau) * w for tau, w in enumerate(_inverse_weights(n))))


def check_low_degree(cm, perp):
    if len(cm) != len(perp):
        raise ValueError(f'commitment has {len(cm)} entries, dual vector {len(perp)}')
    return GroupElement.sum([c * p for c, p in zip(cm.cms, perp.perp)]).is_identity()


def lagrange_coeffs(indices, target=0):
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise ValueError(f'duplicate interpolation indices in {sorted(indices)}')
    if not indices:
        raise ValueError('no interpolation indices')
    coeffs = {}
    target = Scalar(target)
    for i in indices:
        num, den = Scalar(1), Scalar(1)
        for j in indices:
            if j != i:
                num = num * (target - j)
                den = den * (Scalar(i) - j)
        coeffs[i] = num / den
    return coeffs


def interpolate_at(points, target):
    coeffs = lagrange_coeffs(points.keys(), target)
    return sum((coeffs[i] * v for i, v in points.items()), Scalar(0))


def interpolate_zero(points):
    return interpolate_at(points, 0)


def interpolate_group_zero(points):
    """Lagrange interpolation at 0 in the exponent: prod P_i^lambda_i"""
    coeffs = lagrange_coeffs(points.keys(), 0)
    return GroupElement.sum([p * coeffs[i] for i, p in points.items()])


def interpolate_polynomial(points):
    """Coefficients of the unique degree-<(len) polynomial through the points"""
    xs = list(points.keys())
    if len(set(xs)) != len(xs):
        raise ValueError('duplicate interpolation indices')
    result = [Scalar(0)] * len(xs)
    for i in xs:
        basis = [Scalar(1)]
        den = Scalar(1)
        for j in xs:
            if j == i:
                continue
            # multiply basis by (X - j)
            shifted = [Scalar(0)] + basis
            basis = [a - b * j for a, b in zip(shifted, basis + [Scalar(0)])]
            den = den * (Scalar(i) - j)
        scale = points[i] / den
        result = [r + b * scale for r, b in zip(result, basis)]
    while len(result) > 1 and result[-1].is_zero():
        result.pop()
    return SharePolynomial(tuple(result))
