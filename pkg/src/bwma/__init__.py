"""Binary-weight multi-bit-activation quantization toolkit.

A small numpy stack covering the full loop: moment-matched weight
binarization and differentiable multi-bit activation quantization, a minimal
reverse-mode autodiff engine to train with them, crossbar mapping and
mixed-signal inference simulation, and a parameterized hardware cost model.
"""

from .cim import (
    ADC_BYPASS,
    ConductancePair,
    CrossbarSpec,
    adc_quantize,
    analog_mvm,
    dac_decode,
    dac_encode,
    map_weight,
    map_weights,
    mapping_report,
    partition_layer,
    simulate_network,
    tile_submatrix,
)
from .config import RunConfig
from .data import Dataset, load_cifar10_bin, load_mnist_idx
from .errors import (
    BwmaError,
    ConfigError,
    DataFormatError,
    MappingError,
    NumericError,
    ShapeError,
)
from .hwcost import CostReport, CostTables, device_compare, estimate, sweep_adc_bits
from .models import ARCH_NAMES, build_model
from .nn import ActQuant, Model, PassContext, SteSchedule, binarize_ste, fake_quant
from .optim import Adam
from .quant import (
    ActQuantState,
    BinaryLevels,
    SoftQuantParams,
    SteParams,
    binarize_forward,
    binarize_levels,
    dirac_approx,
    sign_approx,
    soft_quantize,
    soft_quantize_grad,
    ste_grad_factor,
    uniform_quantize,
    update_act_range,
)
from .tensor import Tensor
from .train import evaluate, train

__version__ = "0.1.0"
