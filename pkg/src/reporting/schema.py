'''
Versioned JSON run-configuration files and pydantic error formatting.
'''

import json
from pathlib import Path

from pydantic import ValidationError, field_validator

from ..models.config import CdtConfig, SelectionConfig, StrictModel
from ..models.errors import DataValidationError
from ..simulation.study import StudyConfig
from .serialize import SCHEMA_VERSION


class RunConfigFile(StrictModel):

    '''
    Settings for every workflow in one document. Sections not used by a
    command are ignored by it; omitted sections take their defaults.
    '''

    schema_version: str = SCHEMA_VERSION
    cdt: CdtConfig = CdtConfig()
    selection: SelectionConfig = SelectionConfig()
    study: StudyConfig = StudyConfig()

    @field_validator('schema_version')
    @classmethod
    def _supported_version(cls, value: str) -> str:
        if value != SCHEMA_VERSION:
            raise ValueError(f'schema version {value!r} is not supported (expected {SCHEMA_VERSION!r})')
        return value


def format_validation_error(exc: ValidationError) -> str:
    '''One numbered "location: message" line per error.'''
    return '\n'.join(f"{i}) {'.'.join(str(part) for part in err['loc']) or '(root)'}: {err['msg']}"
                     for i, err in enumerate(exc.errors(), 1))


def load_run_config(path) -> RunConfigFile:
    '''
    Parse and validate a run-configuration file.

    Raises:
        DataValidationError for a missing file, invalid JSON, unknown fields,
        out-of-range values or an unsupported schema version.
    '''

    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as exc:
        raise DataValidationError(f'config file not found at {path}') from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f'{path} is not valid JSON: {exc}') from exc

    if not isinstance(raw, dict) or 'schema_version' not in raw:
        raise DataValidationError(f'{path} must be a JSON object with a "schema_version" field')
    try:
        return RunConfigFile.model_validate(raw)
    except ValidationError as exc:
        raise DataValidationError(f'{exc.error_count()} invalid setting(s) in {path.name}:\n'
                                  f'{format_validation_error(exc)}') from exc
