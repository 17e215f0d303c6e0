""" Numerical small-time heat kernel asymptotics at the sub-Riemannian cut locus """
from .errors import SubheatError
from .models import make_model
