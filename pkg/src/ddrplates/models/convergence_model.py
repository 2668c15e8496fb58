# pylint: disable=E0402, E1101
import math

from .core import BaseDB, BaseModel, ConvergencePointData, ConvergenceRunData, ModelError


def _nullable(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


class ConvergenceDB(BaseDB):
    def __init__(self, driver):
        super().__init__(driver, model_class=ConvergenceRun)

    def create_new(self, label, date, config, target, slope, slope_u, passed):
        self._refuse_duplicate(label)

        data = ConvergenceRunData(
            label=label,
            date=str(date),
            degree=int(config.degree),
            D=float(config.D),
            nu=float(config.nu),
            solution=config.solution,
            target=float(target),
            slope=_nullable(slope),
            slope_u=_nullable(slope_u),
            passed=bool(passed),
        )

        with self.driver.state.get_session() as session:
            session.add(data)

        return self.model_class(self.driver, data)


class ConvergenceRun(BaseModel):
    table_type = ConvergenceRunData

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.PointDB = ConvergencePointDB(self.driver)

    def delete(self):
        with self.driver.state.get_session() as session:
            status = session.query(type(self).table_type).filter_by(id=self.id).delete()
            session.query(ConvergencePointData).filter_by(run_id=self.id).delete()
        return status

    @property
    def label(self):
        return self.data.label

    @property
    def date(self):
        return self.data.date

    @property
    def degree(self):
        return self.data.degree

    @property
    def target(self):
        return self.data.target

    @property
    def slope(self):
        return self.data.slope

    @property
    def slope_u(self):
        return self.data.slope_u

    @property
    def passed(self):
        return self.data.passed

    @property
    def points(self):
        return self.PointDB.query_all(run_id=self.id) or ()

    def add_point(self, report, rate):
        if self.id is None:
            raise ModelError('Convergence run has not been stored yet')
        return self.PointDB.create_new(self.id, report, rate)

    def summary(self):
        slope = 'n/a' if self.slope is None else f'{self.slope:.3f}'
        status = 'PASS' if self.passed else 'FAIL'
        return (f'#{self.id} {self.date} {self.label}: degree {self.degree}, '
                f'{len(self.points)} meshes, slope {slope} (target {self.target:.2f}) {status}')


class ConvergencePointDB(BaseDB):
    def __init__(self, driver):
        super().__init__(driver, model_class=ConvergencePoint)

    def create_new(self, run_id, report, rate):
        data = ConvergencePointData(
            run_id=int(run_id),
            mesh=report.mesh,
            h=float(report.h),
            ndof_retained=int(report.ndof_retained),
            err_total=float(report.err_total),
            err_sigma=float(report.err_sigma),
            err_u=float(report.err_u),
            rate_total=_nullable(rate),
            gamma=float(report.gamma),
            solve_seconds=float(report.solve_seconds),
        )

        with self.driver.state.get_session() as session:
            session.add(data)

        return self.model_class(self.driver, data)


class ConvergencePoint(BaseModel):
    table_type = ConvergencePointData

    @property
    def run_id(self):
        return self.data.run_id

    @property
    def mesh(self):
        return self.data.mesh

    @property
    def h(self):
        return self.data.h

    @property
    def err_total(self):
        return self.data.err_total

    @property
    def rate_total(self):
        return self.data.rate_total
