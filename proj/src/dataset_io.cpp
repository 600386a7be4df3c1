#include "robmix/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace robmix {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}  // namespace

void write_dataset_csv(std::ostream& os, const GroupedDataset& data) {
    os << "group,y";
    for (int j = 1; j <= data.p; ++j) os << ",x" << j;
    for (int j = 1; j <= data.q; ++j) os << ",z" << j;
    os << "\n";
    for (int i = 0; i < data.n(); ++i) {
        const Group& g = data.groups[i];
        for (int r = 0; r < data.m; ++r) {
            os << i << "," << format_double(g.y(r));
            for (int j = 0; j < data.p; ++j) os << "," << format_double(g.X(r, j));
            for (int j = 0; j < data.q; ++j) os << "," << format_double(g.Z(r, j));
            os << "\n";
        }
    }
}

void write_dataset_csv(const std::string& path, const GroupedDataset& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    write_dataset_csv(os, data);
}

GroupedDataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("dataset CSV: empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "group" || header[1] != "y") {
        throw std::runtime_error("dataset CSV: header must start with group,y");
    }
    int p = 0;
    int q = 0;
    std::size_t col = 2;
    while (col < header.size() && header[col] == "x" + std::to_string(p + 1)) {
        ++p;
        ++col;
    }
    while (col < header.size() && header[col] == "z" + std::to_string(q + 1)) {
        ++q;
        ++col;
    }
    if (col != header.size() || p == 0) {
        throw std::runtime_error("dataset CSV: header columns must be group,y,x1..xp,z1..zq");
    }

    struct Raw {
        std::vector<double> y;
        std::vector<std::vector<double>> x;
        std::vector<std::vector<double>> z;
    };
    std::vector<Raw> raw;
    long last_gid = -1;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != 2 + p + q) {
            throw std::runtime_error("dataset CSV line " + std::to_string(line_no) +
                                     ": wrong field count");
        }
        long gid = 0;
        try {
            gid = std::stol(fields[0]);
        } catch (const std::exception&) {
            throw std::runtime_error("dataset CSV line " + std::to_string(line_no) +
                                     ": bad group id");
        }
        if (gid != last_gid && gid != last_gid + 1) {
            throw std::runtime_error("dataset CSV line " + std::to_string(line_no) +
                                     ": rows must be sorted by consecutive group id");
        }
        if (gid == last_gid + 1) {
            raw.emplace_back();
            last_gid = gid;
        }
        Raw& g = raw.back();
        try {
            g.y.push_back(std::stod(fields[1]));
            std::vector<double> xr(p), zr(q);
            for (int j = 0; j < p; ++j) xr[j] = std::stod(fields[2 + j]);
            for (int j = 0; j < q; ++j) zr[j] = std::stod(fields[2 + p + j]);
            g.x.push_back(std::move(xr));
            g.z.push_back(std::move(zr));
        } catch (const std::exception&) {
            throw std::runtime_error("dataset CSV line " + std::to_string(line_no) +
                                     ": bad numeric field");
        }
    }
    if (raw.empty()) {
        throw std::runtime_error("dataset CSV: no data rows");
    }
    const int m = static_cast<int>(raw.front().y.size());
    GroupedDataset data;
    data.m = m;
    data.p = p;
    data.q = q;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (static_cast<int>(raw[i].y.size()) != m) {
            throw std::runtime_error("dataset CSV: ragged groups (group " + std::to_string(i) +
                                     " has " + std::to_string(raw[i].y.size()) + " rows, expected " +
                                     std::to_string(m) + ")");
        }
        Group g;
        g.y.resize(m);
        g.X.resize(m, p);
        g.Z.resize(m, q);
        for (int r = 0; r < m; ++r) {
            g.y(r) = raw[i].y[r];
            for (int j = 0; j < p; ++j) g.X(r, j) = raw[i].x[r][j];
            for (int j = 0; j < q; ++j) g.Z(r, j) = raw[i].z[r][j];
        }
        data.groups.push_back(std::move(g));
    }
    return data;
}

GroupedDataset read_dataset_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open for reading: " + path);
    }
    return read_dataset_csv(is);
}

}  // namespace robmix
