#pragma once

#include <string>
#include <utility>
#include <vector>

#include "facesync/face_model.hpp"

namespace facesync {

/// Writes the FKT1 container: magic "FKT1", uint32 header length, JSON
/// header, then float32 blocks (mean, identity, blendshapes) and uint32
/// blocks (triangles, symmetry) in the order listed in the header.
void save_model(const FaceModel& model, const std::string& path);
FaceModel load_model(const std::string& path);

std::vector<char> encode_model(const FaceModel& model);
FaceModel decode_model(std::vector<char> bytes);

/// Pairs every vertex with the vertex closest to its mirror image across
/// x = 0. Pairs must be mutual and closer than `tolerance`; unmatched
/// vertices pair with themselves.
std::vector<int> mirror_symmetry_map(const Vertices& vertices, double tolerance);

/// Inputs for converting an OBJ-based blendshape rig (e.g. ICT-FaceKit
/// exports) into a FaceModel. Every OBJ must share the neutral topology.
struct ObjImportConfig {
  std::string neutral;
  std::vector<std::string> identity;  // identity shapes, in basis order
  std::vector<std::pair<std::string, std::string>> expressions;  // name, path
  std::vector<VertexRange> keep;      // vertex ranges to keep (empty = all)
  VertexRange eyeball_right;          // in original numbering
  VertexRange eyeball_left;
  double symmetry_tolerance = 1e-3;
};

/// Displacement fields are shape - neutral; quads are split into triangles.
FaceModel import_obj_model(const ObjImportConfig& config);

/// Minimal OBJ reader (v / f records only; faces fan-triangulated).
void read_obj(const std::string& path, Vertices* vertices, std::vector<Triangle>* triangles);

}  // namespace facesync
