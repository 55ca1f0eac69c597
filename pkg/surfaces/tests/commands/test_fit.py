from __future__ import annotations

import json
from unittest import mock

import torch

from npsurf.tasks.synthetic_shapes import sphere_samples
from surfaces.checkpoint import SHAPE, load_checkpoint
from surfaces.tests.helpers import TINY_FIT, CommandTestCase, write_config


class FitCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.layout, self.samples = self.write_shape(sphere_samples(400))
        self.config = write_config(self.dir / "fit.cfg", TINY_FIT)
        self.out = self.dir / "sphere.ckpt"

    def test_writes_checkpoint_and_log(self):
        log = self.dir / "fit.jsonl"
        out = self.call(
            "fit", layout=self.layout, samples=self.samples, config=str(self.config), out=str(self.out), log=str(log)
        )
        self.assertIn("Fit complete", out)
        self.assertEqual(load_checkpoint(self.out).kind, SHAPE)
        lines = [json.loads(line) for line in log.read_text().splitlines()]
        self.assertEqual([r["iteration"] for r in lines], [0, 1, 2])

    def test_iterations_flag_overrides_the_config(self):
        log = self.dir / "fit.jsonl"
        self.call(
            "fit",
            layout=self.layout,
            samples=self.samples,
            config=str(self.config),
            iterations=2,
            out=str(self.out),
            log=str(log),
        )
        self.assertEqual(len(log.read_text().splitlines()), 2)

    def test_unknown_config_key_exits_with_two(self):
        write_config(self.config, {**TINY_FIT, "iterationz": 5})
        error = self.assertExitCode(
            2, "fit", layout=self.layout, samples=self.samples, config=str(self.config), out=str(self.out)
        )
        self.assertIn("iterationz", str(error))
        self.assertFalse(self.out.exists())

    def test_invalid_layout_exits_with_one(self):
        layout = json.loads(open(self.layout).read())
        layout["corners"].append({"id": 99, "position": [9.0, 9.0, 9.0]})
        bad = self.dir / "bad.json"
        bad.write_text(json.dumps(layout))
        self.assertExitCode(1, "fit", layout=str(bad), samples=self.samples, config=str(self.config), out=str(self.out))

    def test_mesh_target_needs_labels(self):
        self.assertExitCode(
            2, "fit", layout=self.layout, mesh=str(self.dir / "t.obj"), config=str(self.config), out=str(self.out)
        )

    def test_non_finite_loss_exits_with_three_and_keeps_the_last_state(self):
        nan = torch.tensor(float("nan"), dtype=torch.float64)
        with mock.patch("surfaces.fit.anchor_loss", return_value=nan):
            error = self.assertExitCode(
                3, "fit", layout=self.layout, samples=self.samples, config=str(self.config), out=str(self.out)
            )
        self.assertIn("anchor", str(error))
        self.assertEqual(load_checkpoint(self.out).kind, SHAPE)
