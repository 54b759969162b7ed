#include "grcert/gmf.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"

namespace grcert {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kVersion = 1;

bool littleEndianHost() {
    const std::uint16_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

std::vector<unsigned char> readFile(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void writeFile(const fs::path& p, const void* data, std::size_t len) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw Error("short write to " + p.string());
}

std::size_t dtypeWidth(const std::string& dtype) {
    if (dtype == "f64") return 8;
    if (dtype == "f32") return 4;
    throw Error("unsupported tensor dtype '" + dtype + "'");
}

std::vector<unsigned char> encodePayload(const Tensor& t, const std::string& dtype) {
    if (!littleEndianHost()) throw Error("tensor payloads require a little-endian host");
    std::vector<unsigned char> bytes(t.data.size() * dtypeWidth(dtype));
    if (dtype == "f64") {
        std::memcpy(bytes.data(), t.data.data(), bytes.size());
    } else {
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const float f = static_cast<float>(t.data[i]);
            std::memcpy(bytes.data() + 4 * i, &f, 4);
        }
    }
    return bytes;
}

std::vector<double> decodePayload(const std::vector<unsigned char>& bytes,
                                  const std::string& dtype) {
    if (!littleEndianHost()) throw Error("tensor payloads require a little-endian host");
    const std::size_t width = dtypeWidth(dtype);
    std::vector<double> vals(bytes.size() / width);
    if (dtype == "f64") {
        std::memcpy(vals.data(), bytes.data(), bytes.size());
    } else {
        for (std::size_t i = 0; i < vals.size(); ++i) {
            float f;
            std::memcpy(&f, bytes.data() + 4 * i, 4);
            vals[i] = static_cast<double>(f);
        }
    }
    return vals;
}

NodeKind parseKind(const std::string& name) {
    for (NodeKind k : {NodeKind::Input, NodeKind::Linear, NodeKind::Conv2d, NodeKind::ReLU,
                       NodeKind::MaxPool, NodeKind::Add, NodeKind::Sub, NodeKind::Output}) {
        if (name == nodeKindName(k)) return k;
    }
    throw Error("unknown node kind '" + name + "'");
}

struct TensorWriter {
    fs::path dir;
    std::string stem;
    const GmfOptions& opts;
    int next = 0;

    json write(const Tensor& t) {
        const std::string file = stem + ".t" + std::to_string(next++) + ".bin";
        auto bytes = encodePayload(t, opts.dtype);
        writeFile(dir / file, bytes.data(), bytes.size());
        json d;
        d["file"] = file;
        d["dtype"] = opts.dtype;
        d["count"] = t.count();
        d["shape"] = t.shape.dims;
        if (opts.writeChecksums) d["sha256"] = sha256Hex(bytes.data(), bytes.size());
        return d;
    }
};

struct TensorReader {
    fs::path dir;
    std::string dtypeSeen;

    Tensor read(const json& d, const std::string& what) {
        const std::string file = d.at("file").get<std::string>();
        const std::string dtype = d.at("dtype").get<std::string>();
        const std::size_t width = dtypeWidth(dtype);
        if (dtypeSeen.empty()) {
            dtypeSeen = dtype;
        } else if (dtype != dtypeSeen) {
            throw Error("mixed tensor precision: " + what + " is " + dtype +
                        " but earlier tensors are " + dtypeSeen);
        }
        TensorShape shape(d.at("shape").get<std::vector<int>>());
        const auto count = d.at("count").get<std::int64_t>();
        if (!shape.valid() || shape.count() != count) {
            throw Error("tensor descriptor for " + what +
                        " declares inconsistent shape and count");
        }
        auto bytes = readFile(dir / file);
        const std::size_t expected = static_cast<std::size_t>(count) * width;
        if (bytes.size() != expected) {
            throw Error("tensor file " + file + " has " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(expected));
        }
        if (d.contains("sha256")) {
            const std::string want = d.at("sha256").get<std::string>();
            const std::string got = sha256Hex(bytes.data(), bytes.size());
            if (want != got) throw Error("checksum mismatch for " + file);
        }
        return Tensor(std::move(shape), decodePayload(bytes, dtype));
    }
};

}  // namespace

std::string sha256Hex(const void* data, std::size_t len) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int mdLen = 0;
    if (EVP_Digest(data, len, md, &mdLen, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * mdLen);
    for (unsigned int i = 0; i < mdLen; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

void saveModel(const Graph& g, const std::string& path, const GmfOptions& opts) {
    g.requireValid();
    dtypeWidth(opts.dtype);
    const fs::path manifest(path);
    TensorWriter tw{manifest.parent_path(), manifest.stem().string(), opts};

    json doc;
    doc["format"] = "gmf";
    doc["version"] = kVersion;
    doc["input"] = g.inputId();
    doc["output"] = g.outputId();
    json nodes = json::array();
    for (const Node& n : g.nodes()) {
        json jn;
        jn["id"] = n.id;
        jn["kind"] = nodeKindName(n.kind);
        if (!n.inputs.empty()) jn["inputs"] = n.inputs;
        switch (n.kind) {
            case NodeKind::Input:
                jn["shape"] = n.shape.dims;
                break;
            case NodeKind::Linear:
                jn["weight"] = tw.write(n.weight);
                jn["bias"] = tw.write(n.bias);
                break;
            case NodeKind::Conv2d:
                jn["kernel"] = tw.write(n.kernel);
                jn["stride"] = n.stride;
                jn["padding"] = n.padding;
                break;
            case NodeKind::MaxPool:
                jn["window"] = n.window;
                break;
            default:
                break;
        }
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    const std::string text = doc.dump(2) + "\n";
    writeFile(manifest, text.data(), text.size());
}

Graph loadModel(const std::string& path) {
    const fs::path manifest(path);
    auto bytes = readFile(manifest);
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error("cannot parse " + path + ": " + e.what());
    }

    try {
        if (doc.at("format").get<std::string>() != "gmf" ||
            doc.at("version").get<int>() != kVersion) {
            throw Error("unsupported model format version in " + path);
        }
        TensorReader tr{manifest.parent_path(), {}};
        std::vector<Node> nodes;
        for (const json& jn : doc.at("nodes")) {
            const auto id = jn.at("id").get<NodeId>();
            const std::string kindName = jn.at("kind").get<std::string>();
            Node n;
            n.id = id;
            n.kind = parseKind(kindName);
            if (jn.contains("inputs")) n.inputs = jn.at("inputs").get<std::vector<NodeId>>();
            const std::string what = kindName + " node " + std::to_string(id);
            switch (n.kind) {
                case NodeKind::Input:
                    n.shape = TensorShape(jn.at("shape").get<std::vector<int>>());
                    break;
                case NodeKind::Linear:
                    n.weight = tr.read(jn.at("weight"), what);
                    n.bias = tr.read(jn.at("bias"), what);
                    break;
                case NodeKind::Conv2d:
                    n.kernel = tr.read(jn.at("kernel"), what);
                    n.stride = jn.at("stride").get<int>();
                    n.padding = jn.at("padding").get<int>();
                    break;
                case NodeKind::MaxPool:
                    n.window = jn.at("window").get<int>();
                    break;
                default:
                    break;
            }
            nodes.push_back(std::move(n));
        }
        Graph g(std::move(nodes), doc.at("input").get<NodeId>(),
                doc.at("output").get<NodeId>());
        g.requireValid();
        return g;
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path + ": " + e.what());
    }
}

}  // namespace grcert
