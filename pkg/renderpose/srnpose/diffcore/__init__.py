from srnpose.diffcore.tensor import Tensor, get_dtype, set_precision
from srnpose.diffcore.graph import (
    Graph,
    GradientMap,
    backward,
    current_graph,
    new_graph,
    no_grad,
    per_sample_backward,
)
from srnpose.diffcore import ops
from srnpose.diffcore.ops import (
    abs,
    add,
    as_tensor,
    concat,
    conv2d,
    cos,
    div,
    exp,
    expand,
    expand_rows,
    grid2im,
    im2grid,
    matmul,
    mean,
    mul,
    neg,
    permute,
    relu,
    reshape,
    scale,
    shift,
    sigmoid,
    sin,
    slice,
    softplus,
    sqrt,
    square,
    sub,
    sum,
    tanh,
)
from srnpose.diffcore.adam import AdamState, adam_step
from srnpose.diffcore.checks import gradient_check, numerical_gradient
