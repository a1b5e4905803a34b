'''
Exception hierarchy shared by the library and the command-line front end.
Each top-level error carries the exit code the CLI reports for it.
'''


class CdtError(Exception):

    '''Base class for every error raised by this package'''

    exit_code = 1


class DataValidationError(CdtError):

    '''Input data or configuration is unusable (bad CSV, invalid flags, schema mismatch)'''

    exit_code = 2


class StructuralError(CdtError, ValueError):

    '''Shapes or indices do not line up (e.g. a rule referencing a missing column)'''

    exit_code = 2


class PartitionIntegrityError(CdtError):

    '''A unit matched zero or several subgroups of a partition'''

    exit_code = 3


class EstimationError(CdtError):

    '''Estimation could not proceed (an arm too small to reach both sides of a split)'''

    exit_code = 3


class UndefinedEstimateError(EstimationError):

    '''An estimator's arm-size precondition failed for a single subgroup'''
