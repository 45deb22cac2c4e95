#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <span>
#include <vector>

#include "msf/projector.hpp"
#include "msf/volume.hpp"

namespace msf {

/// Header path "<stem>.json" and its default payload "<stem>.bin". A header may name its
/// payload explicitly; relative names resolve against the header's directory.
std::filesystem::path payload_path(const std::filesystem::path& header, const char* suffix = ".bin");
/// `named` (relative to the header's directory) when non-empty, else payload_path(header, suffix).
std::filesystem::path resolve_payload(const std::filesystem::path& header, const std::string& named,
                                      const char* suffix = ".bin");

/// {"dims":[t,z,y,x],"voxel_pitch":p,"dtype":"f32le"} + f32le payload.
void write_volume(const Volume4D& vol, const std::filesystem::path& header);
Volume4D read_volume(const std::filesystem::path& header);

/// {"n_t","n_views","n_det_rows","n_channels","angles":[...]} with y and lambda payloads
/// "<stem>.y.bin" and "<stem>.lambda.bin". The geometry fields needed to rebuild the
/// projector ("channel_pitch","n_y","n_x","voxel_pitch") are written alongside.
void write_sinogram(const SinogramSet& sino, const ScanGeometry& geom,
                    const std::filesystem::path& header);
struct SinogramFile {
  SinogramSet sino;
  ScanGeometry geom;
};
SinogramFile read_sinogram(const std::filesystem::path& header);

// Little-endian float32 helpers.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
void append_f32(std::ostream& out, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace msf
