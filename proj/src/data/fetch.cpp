#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vfl/core/error.hpp"
#include "vfl/data/ingest.hpp"

namespace vfl::data {
namespace {

std::string digest_hex(const EVP_MD* md, const std::vector<std::uint8_t>& bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out, &len, md, nullptr) != 1)
    throw DataError("digest computation failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(out[i]);
  return hex.str();
}

std::size_t collect(char* ptr, std::size_t size, std::size_t nmemb, void* user) {
  auto* sink = static_cast<std::vector<std::uint8_t>*>(user);
  sink->insert(sink->end(), ptr, ptr + size * nmemb);
  return size * nmemb;
}

std::size_t octal_field(const std::uint8_t* p, std::size_t n) {
  std::size_t value = 0;
  for (std::size_t i = 0; i < n && p[i]; ++i) {
    if (p[i] == ' ') continue;
    if (p[i] < '0' || p[i] > '7') throw DataError("malformed tar size field");
    value = value * 8 + (p[i] - '0');
  }
  return value;
}

struct MnistFile {
  const char* name;
};
constexpr MnistFile kMnist[] = {{"train-images-idx3-ubyte"}, {"train-labels-idx1-ubyte"},
                                {"t10k-images-idx3-ubyte"}, {"t10k-labels-idx1-ubyte"}};

struct CifarArchive {
  const char* tarball;
  const char* md5;
  std::vector<std::string> members;
};

CifarArchive cifar_archive(const std::string& dataset) {
  if (dataset == "cifar10")
    return {"cifar-10-binary.tar.gz", "c32a1d4ab5d03f1284b67883e8d87530",
            {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
             "data_batch_5.bin", "test_batch.bin"}};
  return {"cifar-100-binary.tar.gz", "03b5dce01913d631647c71ecec9e9cb8", {"train.bin", "test.bin"}};
}

void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& files) {
  std::ofstream out(dir / "SHA256SUMS");
  for (const auto& [name, bytes] : files) out << sha256_hex(bytes) << "  " << name << "\n";
  if (!out) throw DataError("cannot write checksum manifest in " + dir.string());
}

void fetch_mnist(const std::filesystem::path& target, const FetchOptions& options) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files;
  for (const auto& f : kMnist) {
    std::vector<std::uint8_t> bytes;
    if (options.from_dir) {
      const auto plain = *options.from_dir / f.name;
      const auto gz = *options.from_dir / (std::string(f.name) + ".gz");
      if (std::filesystem::exists(plain)) bytes = read_file(plain);
      else if (std::filesystem::exists(gz)) bytes = read_file(gz);
      else throw DataError("no " + std::string(f.name) + "[.gz] in " + options.from_dir->string());
    } else {
      bytes = download(options.base_url + "/" + f.name + ".gz");
    }
    files.emplace_back(f.name, maybe_gunzip(bytes));
  }
  std::filesystem::create_directories(target);
  for (const auto& [name, bytes] : files) write_file(target / name, bytes);
  // load_mnist checks the digests against the reference values.
  try {
    (void)load_mnist(target, true);
  } catch (const DataError&) {
    for (const auto& [name, bytes] : files) std::filesystem::remove(target / name);
    throw;
  }
}

void fetch_cifar(const std::string& dataset, const std::filesystem::path& target,
                 const FetchOptions& options) {
  const CifarArchive archive = cifar_archive(dataset);
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files;
  if (options.from_dir) {
    for (const auto& m : archive.members) files.emplace_back(m, read_file(*options.from_dir / m));
  } else {
    auto bytes = download(options.base_url + "/" + archive.tarball);
    if (md5_hex(bytes) != archive.md5)
      throw DataError(std::string("checksum mismatch for ") + archive.tarball);
    files = untar(maybe_gunzip(bytes), archive.members);
    if (files.size() != archive.members.size()) throw DataError("CIFAR archive is missing members");
  }
  const std::size_t label_bytes = dataset == "cifar10" ? 1 : 2;
  for (const auto& [name, bytes] : files) (void)parse_cifar_records(bytes, label_bytes);
  std::filesystem::create_directories(target);
  for (const auto& [name, bytes] : files) write_file(target / name, bytes);
  write_manifest(target, files);
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!in) throw DataError("short read on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) { return digest_hex(EVP_sha256(), bytes); }
std::string md5_hex(const std::vector<std::uint8_t>& bytes) { return digest_hex(EVP_md5(), bytes); }

std::vector<std::uint8_t> maybe_gunzip(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return bytes;
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw DataError("zlib init failed");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = uInt(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = chunk.data();
    zs.avail_out = uInt(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

std::vector<std::pair<std::string, std::vector<std::uint8_t>>> untar(
    const std::vector<std::uint8_t>& archive, const std::vector<std::string>& wanted) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
  std::size_t pos = 0;
  while (pos + 512 <= archive.size()) {
    const std::uint8_t* header = archive.data() + pos;
    if (header[0] == 0) break;
    std::string name(reinterpret_cast<const char*>(header), strnlen(reinterpret_cast<const char*>(header), 100));
    const std::size_t size = octal_field(header + 124, 12);
    const char type = char(header[156]);
    pos += 512;
    if (pos + size > archive.size()) throw DataError("truncated tar member " + name);
    const std::string base = name.substr(name.find_last_of('/') + 1);
    if ((type == '0' || type == '\0') &&
        std::find(wanted.begin(), wanted.end(), base) != wanted.end())
      out.emplace_back(base, std::vector<std::uint8_t>(archive.begin() + long(pos),
                                                       archive.begin() + long(pos + size)));
    pos += (size + 511) / 512 * 512;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string digest, name;
  while (in >> digest >> name) entries.emplace_back(digest, name);
  return entries;
}

std::vector<std::uint8_t> download(const std::string& url) {
  static const bool initialized = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK; }();
  if (!initialized) throw DataError("libcurl initialization failed");
  CURL* curl = curl_easy_init();
  if (!curl) throw DataError("libcurl handle allocation failed");
  std::vector<std::uint8_t> body;
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, collect);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) throw DataError("download failed for " + url + ": " + curl_easy_strerror(rc));
  return body;
}

std::string default_base_url(const std::string& dataset) {
  if (dataset == "mnist") return "https://ossci-datasets.s3.amazonaws.com/mnist";
  return "https://www.cs.toronto.edu/~kriz";
}

void fetch_dataset(const std::string& dataset, const std::filesystem::path& cache_dir,
                   const FetchOptions& options) {
  FetchOptions resolved = options;
  if (resolved.base_url.empty()) resolved.base_url = default_base_url(dataset);
  if (dataset == "mnist") return fetch_mnist(cache_dir / "mnist", resolved);
  if (dataset == "cifar10" || dataset == "cifar100")
    return fetch_cifar(dataset, cache_dir / dataset, resolved);
  if (dataset == "synthetic") return;  // generated on demand
  throw ValidationError("unknown dataset '" + dataset + "'");
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("VFL_LAB_CACHE_DIR"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home)
    return std::filesystem::path(home) / ".cache" / "vfl_lab";
  return std::filesystem::current_path() / ".vfl_lab_cache";
}

Dataset ingest_dataset(const std::string& name, const std::filesystem::path& cache_dir,
                       const IngestOptions& options) {
  Dataset ds;
  if (name == "synthetic") {
    ds = make_synthetic(options.synthetic);
  } else {
    const auto dir = cache_dir / name;
    const bool present = name == "mnist"
                             ? std::filesystem::exists(dir / "train-images-idx3-ubyte")
                             : std::filesystem::exists(dir / "SHA256SUMS");
    if (!present) {
      if (!options.allow_download)
        throw DataError("dataset '" + name + "' not found in " + dir.string() +
                        " and downloads are disabled");
      fetch_dataset(name, cache_dir, options.fetch);
    }
    if (name == "mnist") ds = load_mnist(dir);
    else if (name == "cifar10") ds = load_cifar10(dir);
    else if (name == "cifar100") ds = load_cifar100(dir);
    else throw ValidationError("unknown dataset '" + name + "'");
  }
  if (options.max_train || options.max_test)
    ds = truncate(std::move(ds), options.max_train ? options.max_train : ds.train.size(),
                  options.max_test ? options.max_test : ds.test.size());
  return ds;
}

}  // namespace vfl::data
