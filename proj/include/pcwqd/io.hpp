#pragma once

#include "pcwqd/diode_iv.hpp"
#include "pcwqd/lifetime_fit.hpp"
#include "pcwqd/pcw_geometry.hpp"
#include "pcwqd/rc_switching.hpp"
#include "pcwqd/synthesis.hpp"
#include "pcwqd/wgqed_model.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pcwqd::io {

namespace fs = std::filesystem;

// All files use SI base units. CSV files carry a mandatory header row; metadata sits in
// leading "# key=value" comment lines.

// frequency_hz,transmission  (meta: gate_voltage_v, optical_power_w)
ScanTrace read_scan(const fs::path& path);
std::string format_scan(const ScanTrace& trace);

// nu0_hz,gamma_tot_hz,beta,fano_amp,fano_phase_rad,class,diffusion_hz
std::string format_truth(const std::vector<EmitterTruth>& truth);

// time_s,counts,irf_counts  (meta: rep_period_s); time_s is the bin start
DecayHistogram read_histogram(const fs::path& path);
std::string format_histogram(const DecayHistogram& h);

// v_volts,i_amps
std::vector<IvPoint> read_iv(const fs::path& path);
std::string format_iv(const std::vector<IvPoint>& data);

// f_ac_hz,intensity_counts_per_s
std::vector<RcPoint> read_rc(const fs::path& path);
std::string format_rc(const std::vector<RcPoint>& data);

// gate_voltage_v,frequency_hz,transmission (long format, rows grouped by voltage)
PlateauMap read_plateau(const fs::path& path);
std::string format_plateau(const PlateauMap& map);

/// Key-value geometry spec: a_nm, r_nm, rows_per_side, strip_halfwidth_nm ('#' starts a comment).
PcwGeometry read_geometry(const fs::path& path);
PcwGeometry parse_geometry(std::string_view text);
std::string format_geometry(const PcwGeometry& g);

std::string read_file(const fs::path& path);
/// Writes to a temporary sibling and renames it over the target.
void atomic_write(const fs::path& path, std::string_view content);
/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

} // namespace pcwqd::io
