from srnpose.data.dataset_io import InstanceViews, MultiViewDataset, View, load_dataset, save_dataset
from srnpose.data.scene import Box, SceneSpec, Sphere, SphereRandom, SphericalSpiral, generate_views
