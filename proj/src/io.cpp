#include "pcwqd/io.hpp"

#include "pcwqd/error.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace pcwqd::io {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError(fmt::format("{}: '{}' is not a number", where, s));
    }
    return v;
}

struct Table {
    std::map<std::string, std::string, std::less<>> meta;
    std::vector<std::vector<double>> columns;
};

Table parse_table(std::string_view text, const std::vector<std::string_view>& header, const fs::path& origin,
                  std::size_t string_column = std::size_t(-1)) {
    Table t;
    t.columns.resize(header.size());
    bool have_header = false;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        const std::string where = fmt::format("{}:{}", origin.string(), lineno);
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq != std::string_view::npos) {
                t.meta.emplace(std::string(trim(line.substr(1, eq - 1))), std::string(trim(line.substr(eq + 1))));
            }
            continue;
        }
        const auto fields = split(line, ',');
        if (!have_header) {
            if (fields != header) {
                std::string want;
                for (std::size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + std::string(header[i]);
                throw ValidationError(fmt::format("{}: expected header '{}'", where, want));
            }
            have_header = true;
            continue;
        }
        if (fields.size() != header.size()) {
            throw ValidationError(fmt::format("{}: expected {} fields, found {}", where, header.size(), fields.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i != string_column) t.columns[i].push_back(to_double(fields[i], where));
        }
    }
    if (!have_header) throw ValidationError(fmt::format("{}: missing header row", origin.string()));
    return t;
}

double meta_double(const Table& t, std::string_view key, double fallback, const fs::path& origin) {
    const auto it = t.meta.find(key);
    if (it == t.meta.end()) return fallback;
    return to_double(it->second, origin.string() + " metadata");
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

} // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("SHA-256 computation failed");
    }
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

ScanTrace read_scan(const fs::path& path) {
    const Table t = parse_table(read_file(path), {"frequency_hz", "transmission"}, path);
    ScanTrace s;
    s.axis = t.columns[0];
    s.values = t.columns[1];
    if (s.axis.size() < 2) throw ValidationError(path.string() + ": scan needs at least two samples");
    s.step = (s.axis.back() - s.axis.front()) / double(s.axis.size() - 1);
    s.meta.gate_voltage = meta_double(t, "gate_voltage_v", 0.0, path);
    s.meta.optical_power = meta_double(t, "optical_power_w", 0.0, path);
    s.validate();
    return s;
}

std::string format_scan(const ScanTrace& trace) {
    std::string out = fmt::format("# gate_voltage_v={}\n# optical_power_w={}\nfrequency_hz,transmission\n",
                                  num(trace.meta.gate_voltage), num(trace.meta.optical_power));
    for (std::size_t i = 0; i < trace.size(); ++i) out += num(trace.axis[i]) + "," + num(trace.values[i]) + "\n";
    return out;
}

std::string format_truth(const std::vector<EmitterTruth>& truth) {
    std::string out = "nu0_hz,gamma_tot_hz,beta,fano_amp,fano_phase_rad,class,diffusion_hz\n";
    for (const auto& e : truth) {
        out += fmt::format("{},{},{},{},{},{},{}\n", num(e.model.nu0), num(e.model.gamma_tot), num(e.model.beta),
                           num(e.model.fano_amp), num(e.model.fano_phase), to_string(e.cls), num(e.diffusion_hz));
    }
    return out;
}

DecayHistogram read_histogram(const fs::path& path) {
    const Table t = parse_table(read_file(path), {"time_s", "counts", "irf_counts"}, path);
    DecayHistogram h;
    const auto& time = t.columns[0];
    if (time.size() < 2) throw ValidationError(path.string() + ": histogram needs at least two bins");
    h.bin_edges = time;
    h.bin_edges.push_back(time.back() + (time.back() - time.front()) / double(time.size() - 1));
    h.counts = t.columns[1];
    h.irf = t.columns[2];
    h.rep_period = meta_double(t, "rep_period_s", h.rep_period, path);
    h.validate();
    return h;
}

std::string format_histogram(const DecayHistogram& h) {
    std::string out = fmt::format("# rep_period_s={}\ntime_s,counts,irf_counts\n", num(h.rep_period));
    for (std::size_t i = 0; i < h.size(); ++i) {
        out += num(h.bin_edges[i]) + "," + num(h.counts[i]) + "," + num(h.irf[i]) + "\n";
    }
    return out;
}

std::vector<IvPoint> read_iv(const fs::path& path) {
    const Table t = parse_table(read_file(path), {"v_volts", "i_amps"}, path);
    std::vector<IvPoint> out;
    for (std::size_t i = 0; i < t.columns[0].size(); ++i) out.push_back({t.columns[0][i], t.columns[1][i]});
    return out;
}

std::string format_iv(const std::vector<IvPoint>& data) {
    std::string out = "v_volts,i_amps\n";
    for (const auto& p : data) out += num(p.v) + "," + num(p.i) + "\n";
    return out;
}

std::vector<RcPoint> read_rc(const fs::path& path) {
    const Table t = parse_table(read_file(path), {"f_ac_hz", "intensity_counts_per_s"}, path);
    std::vector<RcPoint> out;
    for (std::size_t i = 0; i < t.columns[0].size(); ++i) out.push_back({t.columns[0][i], t.columns[1][i]});
    return out;
}

std::string format_rc(const std::vector<RcPoint>& data) {
    std::string out = "f_ac_hz,intensity_counts_per_s\n";
    for (const auto& p : data) out += num(p.f_ac) + "," + num(p.intensity) + "\n";
    return out;
}

PlateauMap read_plateau(const fs::path& path) {
    const Table t = parse_table(read_file(path), {"gate_voltage_v", "frequency_hz", "transmission"}, path);
    PlateauMap map;
    const auto& v = t.columns[0];
    const auto& f = t.columns[1];
    std::size_t nf = 0;
    while (nf < v.size() && v[nf] == v[0]) ++nf;
    if (nf == 0 || v.size() % nf != 0) throw ValidationError(path.string() + ": plateau rows are not rectangular");
    map.axis_hz.assign(f.begin(), f.begin() + std::ptrdiff_t(nf));
    for (std::size_t r = 0; r < v.size() / nf; ++r) {
        for (std::size_t j = 0; j < nf; ++j) {
            const std::size_t k = r * nf + j;
            if (v[k] != v[r * nf] || f[k] != map.axis_hz[j]) {
                throw ValidationError(fmt::format("{}: row {} breaks the voltage-major grid", path.string(), k + 2));
            }
        }
        map.v_grid.push_back(v[r * nf]);
    }
    map.values = t.columns[2];
    return map;
}

std::string format_plateau(const PlateauMap& map) {
    std::string out = "gate_voltage_v,frequency_hz,transmission\n";
    for (std::size_t i = 0; i < map.v_grid.size(); ++i) {
        for (std::size_t j = 0; j < map.axis_hz.size(); ++j) {
            out += num(map.v_grid[i]) + "," + num(map.axis_hz[j]) + "," + num(map.at(i, j)) + "\n";
        }
    }
    return out;
}

PcwGeometry parse_geometry(std::string_view text) {
    PcwGeometry g;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ValidationError(fmt::format("geometry line {}: expected key = value", lineno));
        const std::string_view key = trim(line.substr(0, eq));
        const std::string where = fmt::format("geometry line {}", lineno);
        const double value = to_double(trim(line.substr(eq + 1)), where);
        if (key == "a_nm") {
            g.a = value * 1e-9;
        } else if (key == "r_nm") {
            g.r = value * 1e-9;
        } else if (key == "rows_per_side") {
            if (value != std::floor(value) || value < 1.0) throw ValidationError(where + ": rows_per_side must be a positive integer");
            g.region.rows_per_side = int(value);
        } else if (key == "strip_halfwidth_nm") {
            g.region.strip_halfwidth = value * 1e-9;
        } else {
            throw ValidationError(fmt::format("{}: unknown key '{}'", where, key));
        }
    }
    g.validate();
    return g;
}

PcwGeometry read_geometry(const fs::path& path) { return parse_geometry(read_file(path)); }

std::string format_geometry(const PcwGeometry& g) {
    return fmt::format("a_nm = {}\nr_nm = {}\nrows_per_side = {}\nstrip_halfwidth_nm = {}\n", num(g.a * 1e9),
                       num(g.r * 1e9), g.region.rows_per_side, num(g.region.strip_halfwidth * 1e9));
}

} // namespace pcwqd::io
