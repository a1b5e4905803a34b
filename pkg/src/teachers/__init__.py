'''
Teacher models: tree ensembles and the CATE metalearners built on them.
'''

from .ensembles import BoostedModel, Forest, fit_forest, fit_gbt
from .metalearners import TeacherOutput, fit_teacher, r_learner_pseudo_outcome
