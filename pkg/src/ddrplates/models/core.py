from contextlib import contextmanager
from sqlalchemy import create_engine
from sqlalchemy import Column, Integer, String, Boolean, Float
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import sessionmaker
from sqlalchemy.orm.exc import NoResultFound

#pylint: disable=E1101
Base = declarative_base()


class DBError(Exception):
    pass


class ModelError(Exception):
    pass


class BaseDB:
    def __init__(self, driver, model_class):
        self.driver = driver
        self.model_class = model_class
        self.table_class = self.model_class.table_type

    def query_one(self, **query_kwargs):
        with self.driver.state.get_session() as session:
            try:
                data = session.query(self.table_class).filter_by(**query_kwargs).one()
            except NoResultFound:
                return None

        return self.model_class(self.driver, data)

    def query_all(self, **query_kwargs):
        with self.driver.state.get_session() as session:
            data = session.query(self.table_class).filter_by(**query_kwargs).order_by(self.table_class.id).all()
        if len(data) == 0:
            return None
        else:
            return tuple(self.model_class(self.driver, d) for d in data)

    def create_new(self, *args, **kwargs):
        raise NotImplementedError

    def _refuse_duplicate(self, label):
        with self.driver.state.get_session() as session:
            if session.query(self.table_class).filter_by(label=label).count() > 0:
                raise DBError(f'{self.table_class.__tablename__}: {label!r} already exists')


class BaseModel:
    table_type = None

    def __init__(self, driver, data):
        self.driver = driver
        self.data = data

    @property
    def id(self):
        return self.data.id


class CertificateData(Base):
    __tablename__ = 'certificates'

    id = Column(Integer, primary_key=True, autoincrement=True)
    label = Column(String, nullable=False, unique=True)
    date = Column(String, nullable=False)
    mesh = Column(String, nullable=False)
    cell_id = Column(Integer, nullable=False)
    k = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    passed = Column(Boolean, nullable=False)
    first_failure = Column(String)
    report = Column(String, nullable=False)


class ConvergenceRunData(Base):
    __tablename__ = 'convergence_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    label = Column(String, nullable=False, unique=True)
    date = Column(String, nullable=False)
    degree = Column(Integer, nullable=False)
    D = Column(Float, nullable=False)
    nu = Column(Float, nullable=False)
    solution = Column(String, nullable=False)
    target = Column(Float, nullable=False)
    slope = Column(Float)
    slope_u = Column(Float)
    passed = Column(Boolean, nullable=False)


class ConvergencePointData(Base):
    __tablename__ = 'convergence_points'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, nullable=False)
    mesh = Column(String, nullable=False)
    h = Column(Float, nullable=False)
    ndof_retained = Column(Integer, nullable=False)
    err_total = Column(Float, nullable=False)
    err_sigma = Column(Float, nullable=False)
    err_u = Column(Float, nullable=False)
    rate_total = Column(Float)
    gamma = Column(Float, nullable=False)
    solve_seconds = Column(Float, nullable=False)


class DBConnector():
    def __init__(self, db_path):
        self.engine = create_engine(db_path)
        self.session_maker = sessionmaker(self.engine, expire_on_commit=False)
        Base.metadata.create_all(self.engine)

    @contextmanager
    def get_session(self):
        session = self.session_maker()
        try:
            yield session
            session.commit()
        except:
            session.rollback()
            raise
        finally:
            session.close()
