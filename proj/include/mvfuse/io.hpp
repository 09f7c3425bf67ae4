#pragma once

#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mvfuse::io {

enum class PlyEncoding { Ascii, BinaryLittleEndian };
enum class PlyScalar { Float32, Float64 };

struct PlyWriteOptions {
  PlyEncoding encoding = PlyEncoding::BinaryLittleEndian;
  PlyScalar scalar = PlyScalar::Float64;
};

/// Reads x/y/z (and nx/ny/nz when present) from the vertex element.
PointCloud read_ply(const std::filesystem::path& path);

/// Optional per-point scalar field (e.g. a distance map) is written as an
/// extra vertex property with the given name.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud, const PlyWriteOptions& options = {},
               const std::vector<double>* scalar_field = nullptr, const std::string& scalar_name = "distance");

/// Reads the named per-vertex scalar property, if present.
std::optional<std::vector<double>> read_ply_scalar(const std::filesystem::path& path, const std::string& name);

TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Binary STL. Vertices are welded by exact coordinate on read.
TriangleMesh read_stl(const std::filesystem::path& path);
void write_stl(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Dispatches on the extension (.obj / .stl).
TriangleMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Poses as {"poses": [[16 row-major numbers], ...]}.
nlohmann::json poses_to_json(const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> poses_from_json(const nlohmann::json& doc);
std::vector<RigidTransform> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, const std::vector<RigidTransform>& poses,
                 const nlohmann::json& metadata = nlohmann::json::object());

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Scales coordinates in place (unit conversion on ingest).
void scale_in_place(PointCloud& cloud, double factor);
void scale_in_place(TriangleMesh& mesh, double factor);

}  // namespace mvfuse::io
