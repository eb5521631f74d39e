from hawkes_ldp.models import *
from hawkes_ldp.simulate import *
from hawkes_ldp.likelihood import *
from hawkes_ldp.ldp import *
from hawkes_ldp.serialization import *
from hawkes_ldp.config import *
from hawkes_ldp.cli import *
