from datetime import datetime

from sqlalchemy import DateTime, Integer, LargeBinary, String, create_engine, func, select
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, sessionmaker
from sqlalchemy.pool import StaticPool


class Base(DeclarativeBase):
    pass


class PbbRecord(Base):
    """One bulletin-board entry; the counter is the total order"""
    __tablename__ = 'pbb_entries'

    counter: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=False)
    keyword: Mapped[bytes] = mapped_column(LargeBinary, index=True, nullable=False)
    value: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    posted_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)

    @classmethod
    def max_counter(cls, session):
        return session.scalar(select(func.coalesce(func.max(cls.counter), 0)))

    @classmethod
    def window(cls, session, t_start, t_end, keyword):
        stmt = (select(cls)
                .where(cls.keyword == keyword, cls.counter >= t_start, cls.counter <= t_end)
                .order_by(cls.counter))
        return session.scalars(stmt).all()

    def __repr__(self):
        return f'<PbbRecord {self.counter} {self.keyword[-8:]!r} ({len(self.value)} bytes)>'


class RunRecord(Base):
    """Ledger of simulator runs written by the command line when --db is given"""
    __tablename__ = 'runs'

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    scenario: Mapped[str] = mapped_column(String(32), nullable=False)
    adversary: Mapped[str] = mapped_column(String(32), nullable=False)
    n: Mapped[int] = mapped_column(Integer, nullable=False)
    t: Mapped[int] = mapped_column(Integer, nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    report_digest: Mapped[str] = mapped_column(String(64), nullable=False)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)

    @classmethod
    def from_report(cls, report, digest):
        config = report.config
        return cls(scenario=config.scenario, adversary=config.adversary, n=config.n, t=config.t,
                   seed=config.seed, report_digest=digest)

    @classmethod
    def for_seed(cls, session, scenario, seed):
        return session.scalars(select(cls).where(cls.scenario == scenario, cls.seed == seed)).all()

    def __repr__(self):
        return f'<RunRecord {self.scenario} n={self.n} seed={self.seed}>'


def init_db(url='sqlite://'):
    """Engine plus session factory with the schema created"""
    kwargs = {}
    if url in ('sqlite://', 'sqlite:///:memory:'):
        # one shared connection so every session sees the same in-memory database
        kwargs = {'connect_args': {'check_same_thread': False}, 'poolclass': StaticPool}
    engine = create_engine(url, **kwargs)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine, expire_on_commit=False)
