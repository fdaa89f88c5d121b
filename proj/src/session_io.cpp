#include "spdreg/session_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "spdreg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "session files are little-endian; big-endian hosts need byte swaps");

namespace spdreg {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'P', 'D', 'R', 'E', 'G', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError(std::string("truncated file while reading ") + what);
    return value;
}

void write_block_f32(std::ostream& out, const Matrix& block) {
    std::vector<float> row(static_cast<std::size_t>(block.cols()));
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
        for (Eigen::Index c = 0; c < block.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = static_cast<float>(block(r, c));
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

Matrix read_block_f32(std::istream& in, int channels, std::uint64_t samples) {
    Matrix block(channels, static_cast<Eigen::Index>(samples));
    std::vector<float> row(static_cast<std::size_t>(samples));
    for (int r = 0; r < channels; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw IoError("truncated file while reading sample data");
        for (std::uint64_t c = 0; c < samples; ++c) {
            block(r, static_cast<Eigen::Index>(c)) = static_cast<double>(row[c]);
        }
    }
    return block;
}

struct Header {
    std::uint32_t channels;
    std::uint64_t samples;
    double sample_rate;
    std::uint32_t n_blocks;
    std::string subject_id;
};

void write_header(std::ostream& out, const Header& h) {
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, h.channels);
    write_pod(out, h.samples);
    write_pod(out, h.sample_rate);
    write_pod(out, h.n_blocks);
    write_pod(out, static_cast<std::uint32_t>(h.subject_id.size()));
    out.write(h.subject_id.data(),
              static_cast<std::streamsize>(h.subject_id.size()));
}

Header read_header(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw IoError("not a session file (bad magic; expected SPDREG01)");
    }
    Header h;
    h.channels = read_pod<std::uint32_t>(in, "channel count");
    h.samples = read_pod<std::uint64_t>(in, "sample count");
    h.sample_rate = read_pod<double>(in, "sample rate");
    h.n_blocks = read_pod<std::uint32_t>(in, "block count");
    const auto id_len = read_pod<std::uint32_t>(in, "subject id length");
    h.subject_id.resize(id_len);
    in.read(h.subject_id.data(), id_len);
    if (!in) throw IoError("truncated file while reading subject id");
    if (h.channels == 0 || h.samples == 0 || !(h.sample_rate > 0.0)) {
        throw IoError("session header has non-positive dimensions");
    }
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace

std::filesystem::path events_sidecar(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".events.csv";
    return p;
}

std::filesystem::path truth_sidecar(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".truth.csv";
    return p;
}

void write_session(const std::filesystem::path& path, const SessionRecording& rec) {
    if (rec.channels() < 1 || rec.total_samples() < 1) {
        throw InvalidInputError("session has no data to write");
    }
    std::ofstream out = open_out(path);
    write_header(out, Header{static_cast<std::uint32_t>(rec.channels()),
                             static_cast<std::uint64_t>(rec.total_samples()),
                             rec.sample_rate, 0, rec.subject_id});
    write_block_f32(out, rec.continuous_data);
    if (!out) throw IoError("write failed for " + path.string());

    std::ofstream events(events_sidecar(path), std::ios::trunc);
    if (!events) throw IoError("cannot write events sidecar for " + path.string());
    events << "onset_s,rt_s\n";
    events.precision(std::numeric_limits<double>::max_digits10);
    for (const TimedRt& e : rec.events) events << e.time << ',' << e.rt << '\n';
}

SessionRecording read_session(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    const Header h = read_header(in);
    if (h.n_blocks != 0) {
        throw IoError(path.string() + " holds epoched trials, not a session");
    }
    SessionRecording rec;
    rec.sample_rate = h.sample_rate;
    rec.subject_id = h.subject_id;
    rec.continuous_data =
        read_block_f32(in, static_cast<int>(h.channels), h.samples);

    const std::filesystem::path sidecar = events_sidecar(path);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream events(sidecar);
        if (!events) throw IoError("cannot open " + sidecar.string());
        std::string line;
        std::getline(events, line);  // header
        int lineno = 1;
        while (std::getline(events, line)) {
            ++lineno;
            if (line.empty()) continue;
            TimedRt e;
            char comma = 0;
            std::istringstream fields(line);
            fields >> e.time >> comma >> e.rt;
            if (!fields || comma != ',') {
                std::ostringstream msg;
                msg << sidecar.string() << ":" << lineno << ": malformed event row";
                throw IoError(msg.str());
            }
            rec.events.push_back(e);
        }
    }
    return rec;
}

void write_trials(const std::filesystem::path& path, std::span<const Trial> trials,
                  double sample_rate, const std::string& subject_id) {
    if (trials.empty()) throw InvalidInputError("no trials to write");
    const int channels = trials.front().channels();
    const int samples = trials.front().samples();
    for (const Trial& t : trials) {
        if (t.channels() != channels || t.samples() != samples) {
            throw ShapeError("trials disagree on shape; cannot serialize");
        }
    }
    std::ofstream out = open_out(path);
    write_header(out, Header{static_cast<std::uint32_t>(channels),
                             static_cast<std::uint64_t>(samples), sample_rate,
                             static_cast<std::uint32_t>(trials.size()), subject_id});
    for (const Trial& t : trials) write_pod(out, t.label);
    for (const Trial& t : trials) write_pod(out, t.onset_time);
    for (const Trial& t : trials) write_block_f32(out, t.data);
    if (!out) throw IoError("write failed for " + path.string());
}

TrialSet read_trials(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    const Header h = read_header(in);
    if (h.n_blocks == 0) {
        throw IoError(path.string() + " holds a continuous session, not trials");
    }
    TrialSet set;
    set.sample_rate = h.sample_rate;
    set.subject_id = h.subject_id;
    std::vector<double> labels(h.n_blocks), onsets(h.n_blocks);
    for (auto& v : labels) v = read_pod<double>(in, "trial label");
    for (auto& v : onsets) v = read_pod<double>(in, "trial onset");
    set.trials.reserve(h.n_blocks);
    for (std::uint32_t i = 0; i < h.n_blocks; ++i) {
        Trial t;
        t.data = read_block_f32(in, static_cast<int>(h.channels), h.samples);
        t.label = labels[i];
        t.onset_time = onsets[i];
        set.trials.push_back(std::move(t));
    }
    return set;
}

}  // namespace spdreg
