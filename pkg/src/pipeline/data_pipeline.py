''' Module for ingesting tabular trial data: loading, cleaning and validating
a CSV (or Excel) file into a Dataset.
Steps orchestrated within the DataPipeline class.
'''

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..models.data import Dataset
from ..models.errors import DataValidationError

logger = logging.getLogger(__name__)

# Cap on how many offending cells are quoted in an error message
MAX_QUOTED_ERRORS = 5


class DataPipeline:
    '''
    Class for loading, cleaning and validating an outcome / treatment /
    covariate table.
    '''

    # ANSI codes for bold and reset in console summaries
    bold = '\033[1m'
    end_bold = '\033[0m'

    def __init__(self,
                 file_path,
                 outcome: str,
                 treatment: str,
                 id_column: Optional[str] = None,
                 covariates: Optional[Sequence[str]] = None,
                 read_params: dict = None):

        '''
        Initializes the pipeline with the column roles.

        covariates defaults to every column that is not the outcome,
        treatment or id column, in file order.
        '''

        self.file_path = Path(file_path)
        self.outcome = outcome
        self.treatment = treatment
        self.id_column = id_column
        self.covariates = list(covariates) if covariates is not None else None
        self.read_params = read_params if read_params is not None else {}

        # Filled in during processing
        self.raw_data: pd.DataFrame = None
        self.cleaned_data: pd.DataFrame = None
        self.validated_data: pd.DataFrame = None
        self.input_data_errors: pd.DataFrame = None
        self.dataset: Dataset = None

    def __str__(self):

        return (f'DataPipeline(file={self.file_path.name}, outcome={self.outcome}, '
                f'treatment={self.treatment}, '
                f'rows={len(self.validated_data) if self.validated_data is not None else "None"})')

    def _load_data(self) -> pd.DataFrame:

        '''
        Loads the data based on file extension.
        '''

        if not self.file_path.exists():
            raise DataValidationError(f'File not found at {self.file_path}')

        suffix = self.file_path.suffix.lower()

        if suffix not in ('.csv', '.xls', '.xlsx'):
            raise DataValidationError(f'Unsupported file type: {suffix} at {self.file_path}')

        try:
            if suffix == '.csv':
                df = pd.read_csv(self.file_path, **self.read_params)
            else:
                df = pd.read_excel(self.file_path, **self.read_params)
        except ValueError as exc:
            # pandas parser and empty-file errors
            raise DataValidationError(f'could not read {self.file_path.name}: {exc}') from exc

        if df.empty:
            raise DataValidationError(f'{self.file_path} contains no rows')

        self.raw_data = df
        return df

    def _clean_data(self, df: pd.DataFrame) -> pd.DataFrame:
        '''
        Resolves column roles and coerces every analysis column to numeric.
        Cells that cannot be parsed become NaN and are reported by
        _validate_inputs.
        '''

        df = df.copy()
        df.columns = [str(c).strip() for c in df.columns]
        self.raw_data = df

        role_columns = [self.outcome, self.treatment] + ([self.id_column] if self.id_column else [])
        missing = [c for c in role_columns + (self.covariates or []) if c not in df.columns]
        if missing:
            raise DataValidationError(f'columns not found in {self.file_path.name}: {missing}; '
                                      f'available: {list(df.columns)}')

        if self.covariates is None:
            self.covariates = [c for c in df.columns if c not in role_columns]
        if not self.covariates:
            raise DataValidationError('no covariate columns left after removing outcome, '
                                      'treatment and id columns')

        analysis = self.covariates + [self.treatment, self.outcome]
        cleaned = df[analysis].apply(pd.to_numeric, errors='coerce')
        if self.id_column:
            cleaned.insert(0, self.id_column, df[self.id_column].astype(str))

        self.cleaned_data = cleaned
        return cleaned

    def _validate_inputs(self, df: pd.DataFrame) -> pd.DataFrame:
        '''
        Records every non-finite or non-numeric cell and every non-binary
        treatment value with its row and column, then fails if any exist.
        Rows are numbered from 1, counting data rows only.
        '''

        error_records = []
        numeric = self.covariates + [self.treatment, self.outcome]
        values = df[numeric].to_numpy(dtype=float)

        bad_rows, bad_cols = np.nonzero(~np.isfinite(values))
        for r, c in zip(bad_rows, bad_cols):
            column = numeric[c]
            error_records.append({'row': int(r) + 1,
                                  'column': column,
                                  'value': str(self.raw_data[column].iloc[r]),
                                  'error': 'missing, non-numeric or infinite value'})

        treatment = df[self.treatment].to_numpy(dtype=float)
        non_binary = np.flatnonzero(np.isfinite(treatment) & ~np.isin(treatment, (0.0, 1.0)))
        for r in non_binary:
            error_records.append({'row': int(r) + 1,
                                  'column': self.treatment,
                                  'value': str(self.raw_data[self.treatment].iloc[r]),
                                  'error': 'treatment must be 0 or 1'})

        error_df = pd.DataFrame(error_records, columns=['row', 'column', 'value', 'error'])
        self.input_data_errors = error_df

        bold, end_bold = self.bold, self.end_bold
        if not error_df.empty:
            n_rows = error_df['row'].nunique()
            input_label = 'input has' if len(error_records) == 1 else 'inputs have'
            print(f'✅ {len(df) - n_rows} / {len(df)} rows have passed validation checks. '
                  f'\n🚨 {len(error_records)} {input_label} failed validation for '
                  f'{bold}{self.file_path.name}{end_bold}. Please investigate further.')
            quoted = '; '.join(f"row {e['row']}, column '{e['column']}': {e['error']} ({e['value']})"
                               for e in error_records[:MAX_QUOTED_ERRORS])
            more = len(error_records) - MAX_QUOTED_ERRORS
            suffix = f'; and {more} more' if more > 0 else ''
            raise DataValidationError(f'{len(error_records)} invalid cell(s) in '
                                      f'{self.file_path.name}: {quoted}{suffix}')

        print(f'✅ All {len(df)} rows passed validation successfully for '
              f'{bold}{self.file_path.name}{end_bold}.')
        self.validated_data = df
        return df

    def process(self) -> Dataset:
        '''
        Orchestrates loading, cleaning and validation, returning the Dataset.
        '''

        raw_data = self._load_data()
        cleaned_data = self._clean_data(raw_data)
        validated = self._validate_inputs(cleaned_data)

        ids = validated[self.id_column].tolist() if self.id_column else None
        self.dataset = Dataset.from_arrays(x=validated[self.covariates].to_numpy(dtype=float),
                                           z=validated[self.treatment].to_numpy(dtype=float).astype(np.int8),
                                           y=validated[self.outcome].to_numpy(dtype=float),
                                           feature_names=self.covariates,
                                           unit_ids=ids)
        return self.dataset

    def export_data(self,
                    output_file,
                    export_errors: bool = True,
                    export_validated: bool = False) -> Optional[Path]:
        '''
        Exports the input errors and/or validated rows to an Excel file,
        one sheet each.

        Returns the written path, or None when nothing was exported.
        '''

        data_to_export = []

        if export_errors and self.input_data_errors is not None and not self.input_data_errors.empty:
            data_to_export.append((self.input_data_errors, 'Input Data Errors'))

        if export_validated and self.validated_data is not None and not self.validated_data.empty:
            data_to_export.append((self.validated_data, 'Validated Data'))

        if not data_to_export:
            logger.info('no data available to export for the selected options')
            return None

        output_file = Path(output_file)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        with pd.ExcelWriter(output_file, engine='openpyxl') as writer:
            for df, sheet_name in data_to_export:
                df.to_excel(writer, sheet_name=sheet_name, index=False)

        logger.info('exported %s to %s', ' and '.join(s for _, s in data_to_export), output_file)
        return output_file
