#include "dekgci/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace dekgci {
namespace {

constexpr char kMagic[8] = {'D', 'K', 'G', 'C', 'H', 'K', 'P', '\n'};

void put_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <class T>
void put(std::ofstream& out, T v) {
  put_bytes(out, &v, sizeof v);
}

void get_bytes(std::ifstream& in, void* data, std::size_t n) {
  if (!in.read(static_cast<char*>(data), static_cast<std::streamsize>(n)))
    throw Error("checkpoint: truncated file");
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  get_bytes(in, &v, sizeof v);
  return v;
}

void put_mat(std::ofstream& out, const Mat& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  put_bytes(out, m.data(), sizeof(Scalar) * static_cast<std::size_t>(m.size()));
}

Mat get_mat(std::ifstream& in) {
  const auto rows = get<std::int64_t>(in);
  const auto cols = get<std::int64_t>(in);
  if (rows < 0 || cols < 0 || rows > (1LL << 32) || cols > (1LL << 32))
    throw Error("checkpoint: implausible tensor shape");
  Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
  get_bytes(in, m.data(), sizeof(Scalar) * static_cast<std::size_t>(m.size()));
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    put_bytes(out, kMagic, sizeof kMagic);
    put<std::uint32_t>(out, c.version);

    const Hyperparams& h = c.hyper;
    put<std::int64_t>(out, h.batchsize);
    put<std::int64_t>(out, h.n_neighbor);
    put<std::int64_t>(out, h.dim);
    put<std::int64_t>(out, h.layers);
    put<std::int64_t>(out, h.depth);
    put<std::int64_t>(out, h.max_epochs);
    put<std::int64_t>(out, h.patience);
    put<double>(out, h.lr);
    put<double>(out, h.leaky_slope);
    put<double>(out, h.weight_decay);
    put<std::uint64_t>(out, h.seed);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(h.aggregator));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(h.variant));

    put<std::int64_t>(out, c.n_users);
    put<std::int64_t>(out, c.n_entities);
    put<std::int64_t>(out, c.n_relations);

    put<std::int64_t>(out, static_cast<std::int64_t>(c.params.propagation.w1.size()));
    put<std::int64_t>(out, static_cast<std::int64_t>(c.params.propagation.w2.size()));
    put_mat(out, c.params.user);
    put_mat(out, c.params.entity);
    put_mat(out, c.params.relation);
    for (const auto& w : c.params.propagation.w1) put_mat(out, w);
    for (const auto& w : c.params.propagation.w2) put_mat(out, w);
    put_mat(out, c.params.w2);
    put_mat(out, Mat(c.params.b.transpose()));
    if (!out.flush()) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[sizeof kMagic];
  get_bytes(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(path + ": not a checkpoint file");

  Checkpoint c;
  c.version = get<std::uint32_t>(in);
  if (c.version != 1) throw Error(path + ": unsupported checkpoint version");

  Hyperparams& h = c.hyper;
  h.batchsize = static_cast<Index>(get<std::int64_t>(in));
  h.n_neighbor = static_cast<Index>(get<std::int64_t>(in));
  h.dim = static_cast<Index>(get<std::int64_t>(in));
  h.layers = static_cast<Index>(get<std::int64_t>(in));
  h.depth = static_cast<Index>(get<std::int64_t>(in));
  h.max_epochs = static_cast<Index>(get<std::int64_t>(in));
  h.patience = static_cast<Index>(get<std::int64_t>(in));
  h.lr = get<double>(in);
  h.leaky_slope = get<double>(in);
  h.weight_decay = get<double>(in);
  h.seed = get<std::uint64_t>(in);
  h.aggregator = static_cast<Aggregator>(get<std::uint8_t>(in));
  h.variant = static_cast<Variant>(get<std::uint8_t>(in));

  c.n_users = static_cast<Index>(get<std::int64_t>(in));
  c.n_entities = static_cast<Index>(get<std::int64_t>(in));
  c.n_relations = static_cast<Index>(get<std::int64_t>(in));

  const auto n_w1 = get<std::int64_t>(in);
  const auto n_w2 = get<std::int64_t>(in);
  if (n_w1 < 0 || n_w2 < 0 || n_w1 > 64 || n_w2 > 64)
    throw Error(path + ": implausible transform count");
  c.params.user = get_mat(in);
  c.params.entity = get_mat(in);
  c.params.relation = get_mat(in);
  for (std::int64_t i = 0; i < n_w1; ++i) c.params.propagation.w1.push_back(get_mat(in));
  for (std::int64_t i = 0; i < n_w2; ++i) c.params.propagation.w2.push_back(get_mat(in));
  c.params.w2 = get_mat(in);
  const Mat brow = get_mat(in);
  c.params.b = brow.row(0).transpose();

  if (c.params.user.rows() != c.n_users || c.params.entity.rows() != c.n_entities ||
      c.params.relation.rows() != c.n_relations)
    throw Error(path + ": table shapes disagree with recorded sizes");
  return c;
}

void write_manifest_kv(const std::string& path, const std::map<std::string, std::string>& kv) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    if (!out.flush()) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::map<std::string, std::string> read_manifest_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path + ": malformed line `" + line + "`");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace dekgci
