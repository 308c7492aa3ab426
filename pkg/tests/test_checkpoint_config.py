import struct

import numpy as np
import numpy.testing as npt
import pytest

from srpnet.attention import AttentionKind
from srpnet.checkpoint import Checkpoint, CheckpointError
from srpnet.config import RunConfig, TrainConfig, format_config, parse_config, with_seed
from srpnet.net import NetworkConfig
from srpnet.srp import ConfigError, Schedule, SrpConfig, SrpMode


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        g = np.random.default_rng(0)
        tensors = {
            "w": g.standard_normal((3, 4, 2)).astype(np.float32),
            "scalar": np.array(np.float32(np.nan)),
            "wide": g.standard_normal(5),
        }
        ck = Checkpoint(tensors, 2**40 + 7, "a = 1\n")
        path = tmp_path / "c.srpc"
        ck.save(str(path))
        back = Checkpoint.load(str(path))
        assert list(back.tensors) == list(tensors)
        for k, v in tensors.items():
            assert back.tensors[k].dtype == v.dtype
            assert back.tensors[k].tobytes() == v.tobytes()
        assert (back.seed, back.config_text) == (ck.seed, ck.config_text)
        assert back.to_bytes() == path.read_bytes()

    def test_header_layout(self):
        buf = Checkpoint({"ab": np.array([1.5], np.float32)}, 9, "x").to_bytes()
        assert buf[:4] == b"SRPC"
        assert struct.unpack_from("<II", buf, 4) == (1, 1)
        assert struct.unpack_from("<H", buf, 12) == (2,)
        assert buf[14:16] == b"ab"
        assert struct.unpack_from("<BBI", buf, 16) == (0, 1, 1)
        assert struct.unpack_from("<f", buf, 22) == (1.5,)
        assert struct.unpack_from("<QI", buf, 26) == (9, 1)
        assert buf[-1:] == b"x"

    def test_bad_magic(self):
        buf = bytearray(Checkpoint({"a": np.zeros(2, np.float32)}).to_bytes())
        buf[0] = ord("X")
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(bytes(buf))

    def test_truncated(self):
        buf = Checkpoint({"a": np.zeros(20, np.float32)}).to_bytes()
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(buf[:40])

    def test_unsupported_dtype(self):
        with pytest.raises(CheckpointError):
            Checkpoint({"a": np.zeros(2, np.int32)}).to_bytes()


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.net.depth == 14 and cfg.net.srp.mode is SrpMode.OFF
        assert (cfg.train.batch_size, cfg.train.lr, cfg.train.momentum, cfg.train.weight_decay) == (128, 0.1, 0.9, 1e-4)

    def test_mode_defaults(self):
        assert parse_config("srp.mode = ss").net.srp.lambda_target == 0.8
        ms = parse_config("srp.mode = ms").net.srp
        assert (ms.lambda_target, ms.regions, ms.schedule) == (0.6, 5, Schedule.LINEAR)

    def test_parse(self):
        text = """
        # comment
        model.depth = 8
        attention.kind = double
        srp.mode = ms
        srp.lambda = 0.5   # trailing comment
        srp.regions = 3
        srp.schedule = fixed
        train.milestones = 5, 8
        augment.mixup = yes
        data.train_size = 100
        """
        cfg = parse_config(text)
        assert cfg.net.depth == 8 and cfg.net.attention is AttentionKind.DOUBLE
        assert cfg.net.srp == SrpConfig(SrpMode.MS, 0.5, 3, Schedule.FIXED)
        assert cfg.train.milestones == (5, 8) and cfg.train.mixup and cfg.train.train_size == 100

    @pytest.mark.parametrize("text", [
        "model.dpeth = 14",
        "srp.lambda 0.5",
        "srp.mode = ms\nsrp.lambda = 1.2",
        "srp.mode = sometimes",
        "model.depth = 15",
        "train.milestones = 8,5",
        "train.batch_size = 0",
        "augment.mirror = maybe",
        "train.epochs = ten",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_round_trip(self):
        cfg = RunConfig(
            NetworkConfig(depth=8, widths=(8, 16, 32), attention=AttentionKind.DOUBLE,
                          srp=SrpConfig.multi_square(0.45, 3, Schedule.FIXED)),
            TrainConfig(epochs=3, lr=0.05, milestones=(1, 2), mixup=True, train_size=64, test_size=None),
            epoch=2,
        )
        assert parse_config(format_config(cfg)) == cfg
        assert format_config(parse_config(format_config(cfg))) == format_config(cfg)

    def test_with_seed(self):
        assert with_seed(RunConfig(), 7).train.seed == 7
