#pragma once

// Procedural shape families used both as ground-truth object meshes and as
// the retrieval library. Every canonical mesh has bounds exactly [-1, 1]^3.

#include <string>
#include <vector>

#include "sceneprior/scene.hpp"

namespace sceneprior {

Mesh make_box_mesh();
// Top face shrunk to `top_scale` of the bottom face in x and z.
Mesh make_tapered_box(double top_scale);
Mesh make_ellipsoid(int subdivisions);
// Chair-like profile extruded along x: a seat slab of height `seat` (in
// [-1, 1] units above the bottom) and a back of thickness `back` at -z.
Mesh make_l_shape(double seat, double back);

// Affine per-axis remap of the vertices so the bounds become [-1, 1]^3.
Mesh fit_unit_box(const Mesh& mesh);
// Rotation about +y by quarter turns (0..3), counterclockwise seen from above.
Mesh rotate_yaw(const Mesh& mesh, int quarter_turns);

struct LibraryEntry {
  std::string name;
  int label = 0;
  Mesh mesh;  // canonical
};

struct RetrievalLibrary {
  std::vector<LibraryEntry> entries;

  std::vector<const LibraryEntry*> shelf(int label) const;
};

// Two meshes for each non-void category of the default table.
RetrievalLibrary default_library(const CategoryTable& categories);

}  // namespace sceneprior
