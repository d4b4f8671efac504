"""MLflow tracking of report runs."""

import logging
import re

from fanaffinity.report import ReportResult

logger = logging.getLogger(__name__)

DEFAULT_EXPERIMENT = "fan-affinity"
_UNSAFE = re.compile(r"[^A-Za-z0-9_\-./ ]")


def metric_key(*parts: str) -> str:
    """MLflow-safe dotted metric key."""
    return ".".join(_UNSAFE.sub("_", p) for p in parts if p)


class ReportTracker:
    """Logs report runs to an MLflow experiment."""

    def __init__(
        self, experiment_name: str = DEFAULT_EXPERIMENT, tracking_uri: str | None = None
    ):
        """Initialize the tracker.

        Args:
            experiment_name: MLflow experiment to log into (created if missing).
            tracking_uri: MLflow tracking URI. If None, uses MLFLOW_TRACKING_URI env var.
        """
        import mlflow

        if tracking_uri:
            mlflow.set_tracking_uri(tracking_uri)
        self._experiment_name = experiment_name

    def log_report(self, result: ReportResult, params: dict[str, str]) -> str | None:
        """Log parameters, CDR metrics and report files as one run.

        Returns:
            The MLflow run ID, or None if the tracking server was unreachable.
        """
        import mlflow
        from mlflow.exceptions import MlflowException

        metrics: dict[str, float] = {}
        for row in result.cdr.rows:
            label = row.group.label.split("/")
            metrics[metric_key("cohort_size", *label)] = float(row.cohort_size)
            if row.cdr is None:
                continue
            for candidate, value in row.cdr.items():
                metrics[metric_key("cdr", *label, candidate)] = value

        try:
            mlflow.set_experiment(self._experiment_name)
            with mlflow.start_run() as run:
                mlflow.log_params(params)
                mlflow.log_metrics(metrics)
                for path in result.files:
                    mlflow.log_artifact(str(path))
                run_id = run.info.run_id
        except (MlflowException, ConnectionError, OSError) as e:
            logger.warning("Could not log run to MLflow: %s", e)
            return None
        logger.info("Logged report run %s to experiment %s", run_id, self._experiment_name)
        return run_id
