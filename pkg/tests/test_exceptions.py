import pickle

import numpy as np
import pytest

from src.exceptions import (AnalysisError, EstimationError, NotPositiveDefiniteError, PanelSchemaError,
                            RankDeficientError, SchemaIssue)


def _roundtrip(error):
    return pickle.loads(pickle.dumps(error))


class TestPickling:
    def test_estimation_error(self):
        restored = _roundtrip(EstimationError('CA', ValueError('singular weights')))
        assert isinstance(restored, EstimationError)
        assert restored.unit_id == 'CA'
        assert isinstance(restored.cause, ValueError)
        assert "unit 'CA'" in str(restored)

    def test_analysis_error(self):
        restored = _roundtrip(AnalysisError('mean_model', RuntimeError('diverged')))
        assert restored.stage == 'mean_model'
        assert str(restored) == '[mean_model] diverged'

    def test_panel_schema_error(self):
        issues = [SchemaIssue(3, 'duplicate (unit_id, time)'), SchemaIssue(None, 'no rows')]
        restored = _roundtrip(PanelSchemaError(issues))
        assert restored.issues == issues
        assert str(restored) == str(PanelSchemaError(issues))

    @pytest.mark.parametrize('error, field, value', [
        (NotPositiveDefiniteError(2), 'pivot', 2),
        (RankDeficientError(1), 'column', 1),
    ])
    def test_linalg_errors(self, error, field, value):
        restored = _roundtrip(error)
        assert type(restored) is type(error)
        assert getattr(restored, field) == value
        assert isinstance(restored, np.linalg.LinAlgError)
