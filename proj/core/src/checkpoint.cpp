#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ncbf/mlp.hpp"

namespace ncbf {

namespace {

constexpr const char* kMagic = "ncbf-mlp";
constexpr int kVersion = 1;

void write_tensor(std::ostream& os, const std::string& name, const Mat& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << m(r, c);
    os << '\n';
}

Mat read_tensor(std::istream& is, const std::string& expected_name) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing tensor " + expected_name);
    std::istringstream ls(line);
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(ls >> name >> rows >> cols) || name != expected_name || rows <= 0 || cols <= 0)
        throw std::runtime_error("checkpoint: malformed header for tensor " + expected_name);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (!(ls >> m(r, c))) throw std::runtime_error("checkpoint: truncated tensor " + expected_name);
    std::string extra;
    if (ls >> extra) throw std::runtime_error("checkpoint: trailing data in tensor " + expected_name);
    return m;
}

}  // namespace

void export_tensors(std::ostream& os, const MlpParams& net) {
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(17);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        write_tensor(os, "W" + std::to_string(k), net.layers[k].weight);
        write_tensor(os, "b" + std::to_string(k), net.layers[k].bias);
    }
    os.flags(flags);
    os.precision(prec);
}

void write_checkpoint(std::ostream& os, const MlpParams& net) {
    net.validate();
    os << kMagic << ' ' << kVersion << '\n' << "dims";
    for (int d : net.dims()) os << ' ' << d;
    os << '\n';
    export_tensors(os, net);
}

MlpParams read_checkpoint(std::istream& is) {
    std::string line, magic;
    int version = 0;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: empty input");
    {
        std::istringstream ls(line);
        if (!(ls >> magic >> version) || magic != kMagic) throw std::runtime_error("checkpoint: not an ncbf-mlp file");
        if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    std::vector<int> dims;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing dims line");
    {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "dims") throw std::runtime_error("checkpoint: missing dims line");
        for (int d; ls >> d;) dims.push_back(d);
        if (dims.size() < 2) throw std::runtime_error("checkpoint: need at least two dims");
    }
    MlpParams net;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        Layer layer;
        layer.weight = read_tensor(is, "W" + std::to_string(k));
        Mat b = read_tensor(is, "b" + std::to_string(k));
        if (layer.weight.rows() != dims[k + 1] || layer.weight.cols() != dims[k] || b.rows() != dims[k + 1] ||
            b.cols() != 1)
            throw std::runtime_error("checkpoint: tensor shape disagrees with dims line");
        layer.bias = b.col(0);
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

void save_checkpoint(const std::string& path, const MlpParams& net) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_checkpoint(os, net);
    if (!os) throw std::runtime_error("failed writing " + path);
}

MlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path);
    return read_checkpoint(is);
}

}  // namespace ncbf
