from __future__ import annotations

import json

from npsurf.tasks.synthetic_shapes import cube_layout
from surfaces.layout import write_layout
from surfaces.tests.helpers import CommandTestCase


class ValidateCommandTests(CommandTestCase):
    def test_clean_layout(self):
        path = self.dir / "cube.json"
        write_layout(cube_layout(), path)
        out = self.call("validate", path)
        self.assertIn("Layout OK: 8 corners, 6 faces.", out)

    def test_violations_exit_with_one(self):
        path = self.dir / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "corners": [
                        {"id": 0, "position": [0, 0, 0]},
                        {"id": 1, "position": [1, 0, 0]},
                        {"id": 2, "position": [0, 1, 0]},
                        {"id": 3, "position": [5, 5, 5]},
                    ],
                    "faces": [{"id": 0, "corners": [0, 1, 2]}],
                }
            )
        )
        error = self.assertExitCode(1, "validate", path)
        self.assertIn("1 layout violations", str(error))

    def test_missing_file_exits_with_two(self):
        self.assertExitCode(2, "validate", self.dir / "absent.json")

    def test_malformed_json_exits_with_two(self):
        path = self.dir / "broken.json"
        path.write_text("{")
        self.assertExitCode(2, "validate", path)
