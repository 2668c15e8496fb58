# pylint: disable=E0402, E1101
from .core import BaseDB, BaseModel, CertificateData


class CertificateDB(BaseDB):
    def __init__(self, driver):
        super().__init__(driver, model_class=Certificate)

    def create_new(self, certificate, date):
        """Stores an ExactnessCertificate; one row per (mesh, cell, k, seed) and date."""
        label = f'{date} {certificate.mesh} cell {certificate.cell_id} k {certificate.k} seed {certificate.seed}'
        self._refuse_duplicate(label)

        failure = certificate.first_failure
        data = CertificateData(
            label=label,
            date=str(date),
            mesh=certificate.mesh,
            cell_id=int(certificate.cell_id),
            k=int(certificate.k),
            seed=int(certificate.seed),
            passed=bool(certificate.passed),
            first_failure=None if failure is None else failure.name,
            report=certificate.report(),
        )

        with self.driver.state.get_session() as session:
            session.add(data)

        return self.model_class(self.driver, data)

    def failures(self):
        return self.query_all(passed=False)


class Certificate(BaseModel):
    table_type = CertificateData

    @property
    def label(self):
        return self.data.label

    @property
    def date(self):
        return self.data.date

    @property
    def mesh(self):
        return self.data.mesh

    @property
    def cell_id(self):
        return self.data.cell_id

    @property
    def k(self):
        return self.data.k

    @property
    def seed(self):
        return self.data.seed

    @property
    def passed(self):
        return self.data.passed

    @property
    def first_failure(self):
        return self.data.first_failure

    @property
    def report(self):
        return self.data.report

    def summary(self):
        status = 'PASS' if self.passed else f'FAIL ({self.first_failure})'
        return f'#{self.id} {self.date} {self.mesh} cell {self.cell_id} k={self.k} seed={self.seed}: {status}'
