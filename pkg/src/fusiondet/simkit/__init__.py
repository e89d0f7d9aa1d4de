from .beams import FOUR_BEAM_BANDS, FULL_RANGE_BANDS, ONE_BEAM_BANDS, PRESETS, band_membership, reduce_beams
from .io import DatasetError, DatasetManifest, read_dataset, read_manifest, write_dataset
from .scene import SceneSample, generate_scene, ray_box_hits, render_camera, render_lidar
from .spec import CameraSpec, ClassSpec, SceneSpec, default_classes
