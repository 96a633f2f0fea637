import math

# ====Engine====
DEFAULT_PRECISION = 'float64'
SUPPORTED_PRECISIONS = ('float64', 'float32')
FINITE_DIFFERENCE_STEP = 1e-5

# ====Adam====
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# ====Geometry====
ORTHONORMAL_TOLERANCE = 1e-9
GIMBAL_COS_THRESHOLD = 1e-6
WORLD_UP = (0.0, 0.0, 1.0)
ALTERNATE_UP = (0.0, 1.0, 0.0)
PARALLEL_TOLERANCE = 1e-9

# ====Renderer====
DEFAULT_IMAGE_SIZE = 32
DEFAULT_EMBED_DIM = 64
DEFAULT_REPR_DIM = 64
DEFAULT_MARCH_STEPS = 10
DEFAULT_HYPER_HIDDEN = (64,)
DEFAULT_SCENE_NET_SHAPE = (64, 64)
DEFAULT_DENSITY_HIDDEN = (32,)
DEFAULT_LSTM_HIDDEN = 32
DEFAULT_PIXGEN_CHANNELS = 32
DEFAULT_PIXGEN_KERNEL = 3
DEFAULT_NEAR_PLANE_OFFSET = 0.05
DEFAULT_RAY_JITTER = 0.01
DEFAULT_FOCAL_RATIO = 1.0

# ====Training====
DEFAULT_TRAIN_LR = 5e-5
DEFAULT_TRAIN_BATCH = 10
DEFAULT_TRAIN_EPOCHS = 8
DEFAULT_LATENT_WEIGHT = 1e-3
DEFAULT_SEED = 0

# ====Pose estimation====
DEFAULT_POSE_LR = 1e-1
DEFAULT_POSE_STEPS = 300
DEFAULT_LANE_BATCH = 5
DEFAULT_NEIGHBOR_OFFSET_DEG = 30.0
FIXED_LATITUDES_DEG = (45.0, 0.0, -45.0)
FIXED_AZIMUTH_COUNT = 8
POLE_CLAMP_DEG = 89.0
GMSD_CONTRAST = 0.0026
LUMINANCE_WEIGHTS = (0.2989, 0.587, 0.114)
LOSS_KINDS = ('mae', 'mse', 'gmsd')
STRATEGIES = ('fixed24', 'neighbor4')

# ====Two-shot adaptation====
DEFAULT_ADAPT_LR = 5e-5
ADAPT_STEP_FRACTION = 0.2
DEFAULT_SHOTS = 2

# ====Data====
DEFAULT_RADIUS = 1.3
POSE_FILE_TOLERANCE = 1e-6
DEFAULT_TRAIN_VIEWS = 50
DEFAULT_TEST_VIEWS = 10
DEFAULT_INSTANCES = 1
DEFAULT_PRIMITIVES = 2
DEFAULT_SPIRAL_TURNS = 3.0
BACKGROUND_COLOR = (1.0, 1.0, 1.0)
PIXEL_LEVELS = 255
RGB_DIR = 'rgb'
POSE_DIR = 'pose'
INTRINSICS_FILE = 'intrinsics.txt'
MANIFEST_FILE = 'manifest.json'
IMAGE_SUFFIX = '.png'
POSE_SUFFIX = '.txt'
INDEX_WIDTH = 6

# ====Checkpoint====
CHECKPOINT_MAGIC = b'SSRNCKPT'
CHECKPOINT_VERSION = 2
SIDECAR_VERSION = 1

# ====CLI / reports====
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
TRAJECTORY_COLUMNS = ('step', 'lane', 'theta1', 'theta2', 'theta3', 't1', 't2', 't3',
                      'loss', 'e_rot_deg', 'e_tra', 'best_loss')
SUMMARY_FILE = 'summary.csv'
SUMMARY_TEXT_FILE = 'summary.txt'
QUERIES_FILE = 'queries.csv'
CURVES_FILE = 'curves.csv'
CURVES_PLOT_FILE = 'curves.svg'
LOSS_CURVE_FILE = 'loss_curve.csv'
EVAL_QUERIES_PER_INSTANCE = 10
EVAL_INSTANCES = 10

DEG = 180.0 / math.pi
