import json
from struct import pack, unpack

import numpy as np
import pytest

from srnpose.constants.constants import CHECKPOINT_VERSION
from srnpose.data.checkpoint import checkpoint_digest, load_checkpoint, save_checkpoint
from srnpose.data.dataset_io import load_dataset, read_image, read_pose, save_dataset, write_image
from srnpose.data.scene import Box, SceneSpec, Sphere, SphereRandom, SphericalSpiral, cast, generate_views
from srnpose.errors import CheckpointError, CheckpointVersionError, DatasetFormatError
from srnpose.geometry import Intrinsics, look_at_origin, ray_directions
from srnpose.renderer.train import train

ALBEDO = (0.2, 0.4, 0.6)


class TestScene:

    def test_cast_draws_a_disc(self):
        K = Intrinsics.square(16)
        pose = look_at_origin((2.0, 0.0, 0.0))
        image = cast(SceneSpec((Sphere((0.0, 0.0, 0.0), 0.3, ALBEDO),)), pose, K)
        directions, origin = ray_directions(K, pose)
        # distance from the sphere centre to each ray
        along = directions @ -origin
        distance = np.linalg.norm(-origin - along[:, None] * directions, axis=1).reshape(16, 16)
        inside, outside = distance < 0.29, distance > 0.31
        assert inside.any() and outside.any()
        assert np.allclose(image[inside], ALBEDO, atol=1 / 255)
        assert np.array_equal(image[outside], np.ones((outside.sum(), 3)))

    def test_nearest_primitive_wins(self):
        K = Intrinsics.square(8)
        pose = look_at_origin((2.0, 0.0, 0.0))
        front = Sphere((0.5, 0.0, 0.0), 0.2, (0.0, 0.0, 0.0))
        back = Box((0.0, 0.0, 0.0), (0.5, 0.5, 0.5), (1.0, 0.0, 0.0))
        image = cast(SceneSpec((back, front)), pose, K)
        assert np.array_equal(image[4, 4], [0.0, 0.0, 0.0])

    def test_box_intersect(self):
        box = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), ALBEDO)
        directions = np.array([[1.0, 0.0, 0.0]])
        assert box.intersect(np.array([-3.0, 0.0, 0.0]), directions)[0] == pytest.approx(2.5)
        assert box.intersect(np.array([-3.0, 2.0, 0.0]), directions)[0] == np.inf
        # looking away from the box
        assert box.intersect(np.array([-3.0, 0.0, 0.0]), -directions)[0] == np.inf

    def test_sphere_intersect(self):
        sphere = Sphere((0.0, 0.0, 0.0), 0.5, ALBEDO)
        directions = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        t = sphere.intersect(np.array([0.0, 0.0, -3.0]), directions)
        assert t[0] == pytest.approx(2.5)
        assert t[1] == np.inf

    def test_normalized_scene(self, toy_spec):
        assert toy_spec.diagonal() == pytest.approx(1.0)
        low, high = toy_spec.bounds()
        assert np.allclose(low + high, 0.0, atol=1e-12)

    def test_invalid_scenes(self):
        with pytest.raises(ValueError, match="at least one primitive"):
            SceneSpec(())
        with pytest.raises(ValueError, match="primitive 0: sphere radius"):
            SceneSpec((Sphere((0.0, 0.0, 0.0), 0.0, ALBEDO),))
        with pytest.raises(ValueError, match="primitive 1: albedo"):
            SceneSpec((Sphere((0.0, 0.0, 0.0), 0.2, ALBEDO), Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (1.5, 0.0, 0.0))))

    def test_spiral_runs_north_to_south(self):
        eyes = SphericalSpiral().eyes(9, 1.3)
        heights = [eye[2] for eye in eyes]
        assert all(a > b for a, b in zip(heights, heights[1:]))
        assert np.allclose([np.linalg.norm(eye) for eye in eyes], 1.3)

    def test_sphere_random_is_seeded(self):
        a, b = SphereRandom(5).eyes(6, 2.0), SphereRandom(5).eyes(6, 2.0)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert np.allclose([np.linalg.norm(eye) for eye in a], 2.0)
        assert not np.array_equal(a[0], SphereRandom(6).eyes(6, 2.0)[0])

    def test_generated_cameras_face_the_origin(self, train_set):
        for _, view in train_set.samples():
            eye = view.pose[:3, 3]
            assert np.linalg.norm(eye) == pytest.approx(train_set.radius)
            assert np.allclose(-view.pose[:3, 2], -eye / np.linalg.norm(eye))

    def test_instances_get_different_paths(self, train_set):
        first, second = train_set.instances
        assert not np.array_equal(first.views[0].pose, second.views[0].pose)

    def test_generate_views_validation(self, toy_spec):
        with pytest.raises(ValueError, match="n must be >= 1"):
            generate_views(toy_spec, 0, 1.3, SphereRandom())
        with pytest.raises(ValueError, match="radius must be > 0"):
            generate_views(toy_spec, 2, 0.0, SphereRandom())
        with pytest.raises(ValueError, match="unknown view mode"):
            generate_views(toy_spec, 2, 1.3, 'spiral')


class TestDatasetFiles:

    def test_save_and_load(self, train_set, tmp_path):
        loaded = load_dataset(save_dataset(train_set, tmp_path / 'train'))
        assert loaded.intrinsics == train_set.intrinsics
        assert loaded.radius == train_set.radius
        assert [i.instance_id for i in loaded.instances] == [i.instance_id for i in train_set.instances]
        for (_, original), (_, back) in zip(train_set.samples(), loaded.samples()):
            assert np.array_equal(original.pose, back.pose)
            assert np.array_equal(original.image, back.image)
        assert loaded.meta['n'] == 3

    def test_load_without_manifest(self, test_set, tmp_path):
        root = save_dataset(test_set, tmp_path / 'test')
        (root / 'manifest.json').unlink()
        loaded = load_dataset(root)
        assert loaded.view_count == 2
        assert loaded.radius == pytest.approx(test_set.radius)

    def test_bad_pose_file_names_the_view(self, tmp_path):
        path = tmp_path / 'pose.txt'
        path.write_text(" ".join(["1.0"] * 15) + "\n")
        with pytest.raises(DatasetFormatError, match="view 3: expected 16 numbers, got 15"):
            read_pose(path, 3)

    def test_skewed_pose_is_rejected(self, tmp_path):
        path = tmp_path / 'pose.txt'
        skewed = look_at_origin((1.0, 0.5, 0.3))
        skewed[:3, 0] *= 1.5
        path.write_text("".join(" ".join(repr(float(v)) for v in row) + "\n" for row in skewed))
        with pytest.raises(DatasetFormatError, match="view 2: pose is not a rigid"):
            read_pose(path, 2)

    def test_unparseable_number_names_the_line(self, tmp_path):
        path = tmp_path / 'pose.txt'
        path.write_text("1 0 0 0\n0 1 0 x\n")
        with pytest.raises(DatasetFormatError, match="line 2: cannot parse 'x'"):
            read_pose(path, 0)

    def test_missing_intrinsics(self, train_set, tmp_path):
        root = save_dataset(train_set, tmp_path / 'train')
        (root / 'intrinsics.txt').unlink()
        with pytest.raises(DatasetFormatError, match="intrinsics.txt: file not found"):
            load_dataset(root)

    def test_image_size_must_match(self, tmp_path):
        path = tmp_path / 'image.png'
        write_image(np.zeros((4, 5, 3)), path)
        with pytest.raises(DatasetFormatError, match="expected"):
            read_image(path, Intrinsics.square(4))


class TestCheckpoint:

    def test_round_trip_with_state(self, model, train_set, tmp_path):
        result = train(train_set, model, epochs=1, batch=3)
        path = save_checkpoint(result.model, tmp_path / 'model.ckpt', result.state)
        loaded, state = load_checkpoint(path)
        assert loaded.digest() == result.model.digest()
        assert loaded.config == result.model.config
        assert loaded.num_instances == 2
        assert (state.step_count, state.epochs_done) == (result.state.step_count, 1)
        for name, moment in result.state.optimizer.first_moment.items():
            assert np.array_equal(state.optimizer.first_moment[name], moment)
            assert np.array_equal(state.optimizer.second_moment[name], result.state.optimizer.second_moment[name])
        assert state.optimizer.step_count == result.state.optimizer.step_count

    def test_saving_is_deterministic(self, model, tmp_path):
        a = save_checkpoint(model, tmp_path / 'a.ckpt')
        b = save_checkpoint(model, tmp_path / 'b.ckpt')
        assert checkpoint_digest(a) == checkpoint_digest(b)

    def test_without_state(self, model, tmp_path):
        _, state = load_checkpoint(save_checkpoint(model, tmp_path / 'model.ckpt'))
        assert (state.step_count, state.optimizer) == (0, None)

    def test_truncated(self, model, tmp_path):
        path = save_checkpoint(model, tmp_path / 'model.ckpt')
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="truncated checkpoint"):
            load_checkpoint(path)

    def test_other_version(self, model, tmp_path):
        path = save_checkpoint(model, tmp_path / 'model.ckpt')
        data = path.read_bytes()
        path.write_bytes(data[:8] + pack('<I', 99) + data[12:])
        with pytest.raises(CheckpointVersionError) as info:
            load_checkpoint(path)
        assert (info.value.found, info.value.expected) == (99, CHECKPOINT_VERSION)

    def test_bad_magic(self, model, tmp_path):
        path = save_checkpoint(model, tmp_path / 'model.ckpt')
        path.write_bytes(b'NOTACKPT' + path.read_bytes()[8:])
        with pytest.raises(CheckpointError, match="not a checkpoint file"):
            load_checkpoint(path)

    def test_corrupted_payload(self, model, tmp_path):
        path = save_checkpoint(model, tmp_path / 'model.ckpt')
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="payload digest mismatch"):
            load_checkpoint(path)

    def test_header_missing_a_field(self, model, tmp_path):
        path = save_checkpoint(model, tmp_path / 'model.ckpt')
        data = path.read_bytes()
        (size,) = unpack('<Q', data[12:20])
        header = json.loads(data[20:20 + size])
        del header['instance_count']
        text = json.dumps(header).encode()
        path.write_bytes(data[:12] + pack('<Q', len(text)) + text + data[20 + size:])
        with pytest.raises(CheckpointError, match=r"malformed checkpoint header \(missing 'instance_count'\)"):
            load_checkpoint(path)
