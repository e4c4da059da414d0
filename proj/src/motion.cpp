#include "mocap/motion.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mocap {

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

const FramePose& MotionSequence::at_frame(int frame) const {
    const int idx = frame - start_frame();
    if (idx < 0 || idx >= static_cast<int>(frames.size()))
        throw LookupError("no frame " + std::to_string(frame) + " in sequence");
    return frames[idx];
}

std::string motion_to_text(const MotionSequence& seq) {
    std::string out;
    out += "# mocap-motion v1\n";
    out += "# person " + std::to_string(seq.person_id) + "\n";
    out += "# frame_rate ";
    append_number(out, seq.frame_rate);
    out += "\n# viewpoints " + std::to_string(seq.viewpoint_count) + "\n";
    out += "# columns: frame q[" + std::to_string(kDofCount) + "] p[" +
           std::to_string(kJointCount) + "x3] w[" + std::to_string(kKeypointCount) + "] cam[" +
           std::to_string(seq.viewpoint_count) + "] lost\n";
    for (const auto& f : seq.frames) {
        out += std::to_string(f.frame);
        for (int d = 0; d < kDofCount; ++d) {
            out += ' ';
            append_number(out, f.q[d]);
        }
        for (int j = 0; j < kJointCount; ++j)
            for (int c = 0; c < 3; ++c) {
                out += ' ';
                append_number(out, f.positions(j, c));
            }
        for (double w : f.weights) {
            out += ' ';
            append_number(out, w);
        }
        for (int cam : f.cameras) out += ' ' + std::to_string(cam);
        out += f.lost ? " 1\n" : " 0\n";
    }
    return out;
}

MotionSequence motion_from_text(const std::string& text) {
    MotionSequence seq;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    long offset = 0;
    while (std::getline(in, line)) {
        const long line_offset = offset;
        offset += static_cast<long>(line.size()) + 1;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream h(line.substr(1));
            std::string key;
            h >> key;
            if (key == "mocap-motion") {
                std::string ver;
                h >> ver;
                if (ver != "v1") throw FormatError("unsupported motion version " + ver, line_offset);
                header_seen = true;
            } else if (key == "person") {
                h >> seq.person_id;
            } else if (key == "frame_rate") {
                h >> seq.frame_rate;
            } else if (key == "viewpoints") {
                h >> seq.viewpoint_count;
            }
            continue;
        }
        if (!header_seen) throw FormatError("missing mocap-motion header", line_offset);
        std::istringstream row(line);
        FramePose f;
        f.q.resize(kDofCount);
        f.positions.resize(kJointCount, 3);
        f.cameras.assign(seq.viewpoint_count, -1);
        if (!(row >> f.frame)) throw FormatError("bad frame index", line_offset);
        for (int d = 0; d < kDofCount; ++d)
            if (!(row >> f.q[d])) throw FormatError("truncated angle row", line_offset);
        for (int j = 0; j < kJointCount; ++j)
            for (int c = 0; c < 3; ++c)
                if (!(row >> f.positions(j, c)))
                    throw FormatError("truncated position row", line_offset);
        for (int k = 0; k < kKeypointCount; ++k)
            if (!(row >> f.weights[k])) throw FormatError("truncated weight row", line_offset);
        for (int v = 0; v < seq.viewpoint_count; ++v)
            if (!(row >> f.cameras[v])) throw FormatError("truncated camera row", line_offset);
        int lost = 0;
        if (!(row >> lost)) throw FormatError("missing lost flag", line_offset);
        f.lost = lost != 0;
        seq.frames.push_back(std::move(f));
    }
    if (!header_seen) throw FormatError("missing mocap-motion header");
    return seq;
}

void save_motion(const MotionSequence& seq, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write motion file: " + path);
    out << motion_to_text(seq);
}

MotionSequence load_motion(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open motion file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return motion_from_text(ss.str());
}

}  // namespace mocap
