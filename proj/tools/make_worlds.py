#!/usr/bin/env python3
# Copyright 2026 The ulrseg Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the bundled navigation worlds.

Each world is a 2 x 2 arrangement of rooms joined by doorways. Every room
holds one large object class, and the two start poses are in different rooms.
"""
import argparse
import pathlib
import random

WALL, FLOOR = "#", "."
OBJECTS = [("S", 2), ("C", 3), ("T", 4), ("P", 5)]


LICENSE = [
    '# Copyright 2026 The ulrseg Authors. All Rights Reserved.',
    '#',
    '# Licensed under the Apache License, Version 2.0 (the "License");',
    '# you may not use this file except in compliance with the License.',
    '# You may obtain a copy of the License at',
    '#',
    '#     http://www.apache.org/licenses/LICENSE-2.0',
    '#',
    '# Unless required by applicable law or agreed to in writing, software',
    '# distributed under the License is distributed on an "AS IS" BASIS,',
    '# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.',
    '# See the License for the specific language governing permissions and',
    '# limitations under the License.',
]


def make_world(index):
  rng = random.Random(1000 + index)
  room_h = [rng.randint(9, 11) for _ in range(2)]
  room_w = [rng.randint(9, 12) for _ in range(2)]
  rows = room_h[0] + room_h[1] + 3
  cols = room_w[0] + room_w[1] + 3
  g = [[WALL] * cols for _ in range(rows)]
  r0 = [1, room_h[0] + 2]
  c0 = [1, room_w[0] + 2]
  rooms = []
  for i in range(2):
    for j in range(2):
      for r in range(r0[i], r0[i] + room_h[i]):
        for c in range(c0[j], c0[j] + room_w[j]):
          g[r][c] = FLOOR
      rooms.append((r0[i], c0[j], room_h[i], room_w[j]))
  # Doorways through the internal walls; three of the four links are open.
  links = [("h", 0), ("h", 1), ("v", 0), ("v", 1)]
  rng.shuffle(links)
  for kind, k in links[:3]:
    width = rng.randint(1, 2)
    if kind == "h":  # between left and right rooms of row k
      wall_c = c0[1] - 1
      r = rng.randint(r0[k] + 1, r0[k] + room_h[k] - 1 - width)
      for d in range(width):
        g[r + d][wall_c] = FLOOR
    else:  # between top and bottom rooms of column k
      wall_r = r0[1] - 1
      c = rng.randint(c0[k] + 1, c0[k] + room_w[k] - 1 - width)
      for d in range(width):
        g[wall_r][c + d] = FLOOR
  order = list(range(4))
  rng.shuffle(order)
  for (glyph, _), room in zip(OBJECTS, (rooms[k] for k in order)):
    rr, rc, rh, rw = room
    oh, ow = (4, 5) if rng.random() < 0.5 else (5, 4)
    top = rng.randint(rr + 2, rr + rh - 2 - oh)
    left = rng.randint(rc + 2, rc + rw - 2 - ow)
    for r in range(top, top + oh):
      for c in range(left, left + ow):
        g[r][c] = glyph
  starts = []
  for k in rng.sample(range(4), 2):
    rr, rc, rh, rw = rooms[k]
    while True:
      r = rng.randint(rr, rr + rh - 1)
      c = rng.randint(rc, rc + rw - 1)
      if g[r][c] == FLOOR:
        break
    starts.append((r, c, rng.choice("NESW")))
  lines = LICENSE + ["# generated by tools/make_worlds.py", f"name world_{index:02d}",
           f"size {rows} {cols}", f"seed {index}",
           "legend # 0 wall", "legend . 1 floor", "legend S 2 sofa",
           "legend C 3 chair", "legend T 4 table", "legend P 5 painting"]
  lines += [f"start {r} {c} {h}" for r, c, h in starts]
  lines.append("targets 2 3 4 5")
  lines.append("grid")
  lines += ["".join(row) for row in g]
  return "\n".join(lines) + "\n"


def main():
  parser = argparse.ArgumentParser(description=__doc__)
  parser.add_argument("--out", default="data/worlds")
  parser.add_argument("--count", type=int, default=10)
  args = parser.parse_args()
  out = pathlib.Path(args.out)
  out.mkdir(parents=True, exist_ok=True)
  for i in range(args.count):
    (out / f"world_{i:02d}.txt").write_text(make_world(i))


if __name__ == "__main__":
  main()
