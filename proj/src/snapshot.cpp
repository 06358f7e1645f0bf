#include "zmt/snapshot.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace zmt {

namespace {

static_assert(sizeof(double) == 8);

bool host_is_little_endian() { return std::endian::native == std::endian::little; }

void byteswap_doubles(std::vector<double>& data) {
  for (auto& v : data) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u = __builtin_bswap64(u);
    std::memcpy(&v, &u, 8);
  }
}

} // namespace

void save_snapshot(const Tensor& t, const std::string& path) {
  nlohmann::json header;
  header["axes"] = t.axes();
  header["shape"] = t.shape();
  header["dtype"] = "f64";
  header["order"] = "row-major";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_snapshot: cannot open " + path);
  out << header.dump() << '\n';
  std::vector<double> payload = t.storage();
  if (!host_is_little_endian()) byteswap_doubles(payload);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * 8));
  if (!out) throw std::runtime_error("save_snapshot: write failed for " + path);
}

Tensor load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_snapshot: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_snapshot: missing header");
  const nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("dtype") != "f64" || header.at("order") != "row-major")
    throw std::runtime_error("load_snapshot: unsupported dtype/order");
  const Axes axes = header.at("axes").get<Axes>();
  const Shape shape = header.at("shape").get<Shape>();
  std::int64_t total = 1;
  for (auto s : shape) total *= s;
  std::vector<double> payload(static_cast<std::size_t>(total));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * 8));
  if (in.gcount() != static_cast<std::streamsize>(payload.size() * 8))
    throw std::runtime_error("load_snapshot: truncated payload in " + path);
  if (!host_is_little_endian()) byteswap_doubles(payload);
  return Tensor(axes, shape, std::move(payload));
}

} // namespace zmt
