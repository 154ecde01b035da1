#include "wpcurv/field_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wpcurv {

static_assert(std::endian::native == std::endian::little,
              "field files are little-endian; big-endian hosts are unsupported");

namespace {

std::string header_for(const GridSpec& g, const char* kind) {
    std::ostringstream os;
    os << "dim=" << g.dim << "\n";
    os << "shape=";
    for (int a = 0; a < g.dim; ++a) os << (a ? "," : "") << g.shape[a];
    os << "\nextent=";
    os.precision(17);
    for (int a = 0; a < g.dim; ++a) os << (a ? "," : "") << g.extent[a];
    os << "\ntopology=" << (g.topology == Topology::Periodic ? "periodic" : "box");
    os << "\nkind=" << kind << "\n#end\n";
    return os.str();
}

void write_raw(const std::string& path, const std::string& header,
               const std::vector<double>& values) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("write_field: cannot open " + tmp);
        os.write(header.data(), static_cast<std::streamsize>(header.size()));
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!os) throw std::runtime_error("write_field: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("write_field: rename failed for " + path);
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

void write_field(const std::string& path, const ScalarField& f) {
    write_raw(path, header_for(f.grid, "scalar"), f.values);
}

void write_field(const std::string& path, const VectorField& f) {
    write_raw(path, header_for(f.grid, "vector"), f.values);
}

void write_field(const std::string& path, const SymMatrixField& f) {
    write_raw(path, header_for(f.grid, "symmat"), f.values);
}

AnyField read_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_field: cannot open " + path);

    int dim = 0;
    std::vector<int> shape;
    std::vector<double> extent;
    Topology topo = Topology::Periodic;
    std::string kind;
    std::string line;
    bool saw_end = false;
    while (std::getline(is, line)) {
        if (line == "#end") { saw_end = true; break; }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("read_field: malformed header line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "dim") dim = std::stoi(val);
        else if (key == "shape") shape = split_ints(val);
        else if (key == "extent") extent = split_doubles(val);
        else if (key == "topology") {
            if (val == "periodic") topo = Topology::Periodic;
            else if (val == "box") topo = Topology::Box;
            else throw std::runtime_error("read_field: unknown topology '" + val + "'");
        } else if (key == "kind") kind = val;
        else throw std::runtime_error("read_field: unknown header key '" + key + "'");
    }
    if (!saw_end) throw std::runtime_error("read_field: missing #end in " + path);

    GridSpec g = make_grid(dim, shape, extent, topo);
    auto read_values = [&](std::vector<double>& values) {
        is.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (is.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)))
            throw std::runtime_error("read_field: truncated payload in " + path);
    };
    if (kind == "scalar") {
        ScalarField f(g);
        read_values(f.values);
        if (!all_finite(f)) throw std::runtime_error("read_field: non-finite values in " + path);
        return f;
    }
    if (kind == "vector") {
        VectorField f(g);
        read_values(f.values);
        return f;
    }
    if (kind == "symmat") {
        SymMatrixField f(g);
        read_values(f.values);
        if (!all_finite(f)) throw std::runtime_error("read_field: non-finite values in " + path);
        return f;
    }
    throw std::runtime_error("read_field: unknown kind '" + kind + "'");
}

ScalarField read_scalar_field(const std::string& path) {
    AnyField f = read_field(path);
    if (auto* s = std::get_if<ScalarField>(&f)) return std::move(*s);
    throw std::runtime_error("read_scalar_field: " + path + " is not a scalar field");
}

SymMatrixField read_symmat_field(const std::string& path) {
    AnyField f = read_field(path);
    if (auto* s = std::get_if<SymMatrixField>(&f)) return std::move(*s);
    throw std::runtime_error("read_symmat_field: " + path + " is not a symmat field");
}

void atomic_write_text(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("atomic_write_text: cannot open " + tmp);
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw std::runtime_error("atomic_write_text: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic_write_text: rename failed for " + path);
}

}  // namespace wpcurv
