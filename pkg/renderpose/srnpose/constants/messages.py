class RunMessages:
    EPOCH_DONE = "epoch {epoch}: mean loss {loss:.6g} ({steps} steps)"
    LANE_DONE = "lane {lane}: final loss {loss:.6g} after {steps} steps"
    WINNER = "winning lane {lane} with final loss {loss:.6g}"
    ADAPT_DONE = "adapted embedding for instance {handle}: loss {start:.6g} -> {end:.6g}"
    QUERY_DONE = "query {query}: e_rot {e_rot:.3f} deg, e_tra {e_tra:.4f}"
    DATASET_WRITTEN = "wrote {views} views for {instances} instance(s) to {path}"
    CHECKPOINT_WRITTEN = "checkpoint written to {path} (step {step})"


class ErrorMessages:
    # diffcore
    SHAPE_MISMATCH = "{op}: shape mismatch {left} vs {right}"
    BAD_AXIS = "{op}: axis {axis} out of range for shape {shape}"
    BAD_RESHAPE = "reshape: cannot reshape {left} into {right}"
    BAD_EXPAND = "expand: cannot expand {left} to {right}"
    BAD_CONV_INPUT = "conv2d: expected NCHW input and OCkk weight, got {left} and {right}"
    BAD_KERNEL = "conv2d: kernel size must be odd, got {size}"
    EMPTY_CONCAT = "concat: needs at least one tensor"
    BAD_DTYPE = "precision must be one of {choices}, got {value}"
    NON_SCALAR_ROOT = "backward: root must be a scalar, got shape {shape}"
    ROOT_NO_GRAD = "backward: root does not require grad"
    GRAPH_RELEASED = "backward: graph already consumed; run the forward pass again"
    CROSS_SAMPLE = "per_sample_backward: leaf {leaf} is reachable from roots {first} and {second}"
    ROOT_LEAF_COUNT = "per_sample_backward: got {roots} roots but {leaves} leaf groups"
    NON_FINITE_GRAD = "adam_step: non-finite gradient for parameter '{name}'"
    ADAM_SHAPES = "adam_step: parameter '{name}' has shape {left} but gradient {right}"
    BAD_LR = "learning rate must be >= 0"

    # geometry
    NON_FINITE_POSE = "pose values must be finite"
    BAD_FOCAL = "focal length must be > 0"
    BAD_PRINCIPAL = "principal point must lie inside the image"
    BAD_IMAGE_DIMS = "image height and width must be >= 1"
    EYE_IS_TARGET = "look_at: eye and target coincide"
    PARALLEL_UP = "look_at: view direction is parallel to up_hint; pass an alternate up_hint"

    # renderer
    BAD_INSTANCE = "instance index {index} out of range for {count} instance(s)"
    BAD_WIDTH = "{field} must be >= 1"
    BAD_MARCH_STEPS = "march_steps must be >= 1"
    BAD_KERNEL_SIZE = "pixgen_kernel must be a positive odd integer"
    AGGREGATE_LENGTH = "aggregate: got {sigmas} densities but {phis} representations"
    FIELD_SHAPE = "generate_pixels: field has {rows} rows, expected {expected} for {height}x{width}"
    HYPER_COUNT = "hypernetwork emits {emitted} values but the scene network needs {needed}"
    EMPTY_DATASET = "dataset has no views"
    TOO_MANY_INSTANCES = "dataset has {count} instance(s) but the model holds {capacity}"
    NON_FINITE_LOSS = "non-finite loss at epoch {epoch}, instance {instance}, pose {pose}"
    BAD_EPOCHS = "epochs must be >= 0"
    BAD_BATCH = "batch must be >= 1"

    # poser
    BAD_RADIUS = "radius must be > 0"
    BAD_OFFSET = "offset_deg must be in (0, 90)"
    BAD_CONTRAST = "GMSD contrast constant must be > 0"
    GMSD_TOO_SMALL = "GMSD needs images of at least 3x3 pixels, got {height}x{width}"
    UNKNOWN_LOSS = "unknown loss kind '{kind}'; expected one of {choices}"
    UNKNOWN_STRATEGY = "unknown strategy '{strategy}'; expected one of {choices}"
    IMAGE_SHAPES = "image_loss: shape mismatch {left} vs {right}"
    BAD_STEPS = "steps must be >= 0"
    ALL_LANES_FAILED = "all {lanes} refinement lane(s) failed"
    NEED_REFERENCE = "neighbor4 needs a reference pose"

    # generalize
    NO_OBSERVATIONS = "finetune_embedding needs at least one observation"
    ADAPT_NON_FINITE = "non-finite loss during embedding adaptation at step {step}"

    # data
    BAD_VIEW_COUNT = "n must be >= 1"
    NO_PRIMITIVES = "scene needs at least one primitive"
    BAD_PRIMITIVE = "primitive {index}: {reason}"
    UNKNOWN_MODE = "unknown view mode '{mode}'"
    MISSING_FILE = "{path}: file not found"
    BAD_INTRINSICS = "{path}: expected 5 numbers (focal cx cy height width), got {count}"
    BAD_POSE_FILE = "{path}: view {view}: expected 16 numbers, got {count}"
    NOT_RIGID = "{path}: view {view}: pose is not a rigid camera-to-world transform"
    BAD_NUMBER = "{path}: line {line}: cannot parse '{token}' as a number"
    BAD_IMAGE = "{path}: image has shape {shape}, expected {expected}"
    NO_INSTANCES = "{path}: no instance directories found"

    # checkpoint
    BAD_MAGIC = "{path}: not a checkpoint file"
    BAD_VERSION = "{path}: checkpoint format version {found}, expected {expected}"
    TRUNCATED = "{path}: truncated checkpoint ({reason})"
    BAD_HEADER = "{path}: malformed checkpoint header ({reason})"
    DIGEST_MISMATCH = "{path}: payload digest mismatch"
    SIDECAR_BASE = "{path}: adaptation was made for checkpoint {expected}, got {found}"

    # cli
    UNKNOWN_KEY = "unknown config key '{key}'"
    BAD_VALUE = "config key '{key}': {reason}"
    BAD_OVERRIDE = "override '{item}' must look like key=value"
    MISSING_PATH = "config key '{key}': path {path} does not exist"
    EMPTY_TEST_DIR = "{path}: test set is empty"
    TOO_FEW_RUNS = "report needs at least 2 run directories"
