#include "calibreg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace calibreg {

namespace {

constexpr const char* kDatasetSchema = "calibreg.dataset.v1";
constexpr const char* kPredLogSchema = "calibreg.predlog.v1";
constexpr const char* kHistorySchema = "calibreg.history.v1";
constexpr const char* kNetworkMagic = "calibreg-network v1";

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad numeric field: " + s);
  return v;
}

nlohmann::json parse_header_comment(std::istream& in, const char* expected_schema) {
  std::string line;
  if (!std::getline(in, line) || line.size() < 2 || line[0] != '#') {
    throw std::runtime_error("missing descriptor header comment");
  }
  const nlohmann::json j = nlohmann::json::parse(line.substr(1));
  if (j.value("schema", "") != expected_schema) {
    throw std::runtime_error("schema mismatch: expected " + std::string(expected_schema) +
                             ", got " + j.value("schema", "<none>"));
  }
  return j;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json descriptor_to_json(const DatasetDescriptor& descriptor) {
  return nlohmann::json{{"schema", kDatasetSchema},
                        {"kind", dataset_kind_name(descriptor.kind)},
                        {"k", descriptor.k},
                        {"n", descriptor.n},
                        {"d", descriptor.d},
                        {"spread", descriptor.spread},
                        {"noise", descriptor.noise},
                        {"seed", descriptor.seed}};
}

DatasetDescriptor descriptor_from_json(const nlohmann::json& j) {
  DatasetDescriptor d;
  d.kind = dataset_kind_from_name(j.at("kind").get<std::string>());
  d.k = j.at("k").get<int>();
  d.n = j.at("n").get<std::size_t>();
  d.d = j.at("d").get<int>();
  d.spread = j.at("spread").get<double>();
  d.noise = j.at("noise").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ostringstream out;
  out << "# " << descriptor_to_json(dataset.descriptor).dump() << "\n";
  for (int j = 0; j < dataset.dim(); ++j) out << "x" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double* row = dataset.inputs.row(i);
    for (int j = 0; j < dataset.dim(); ++j) out << format_double(row[j]) << ",";
    out << dataset.labels[i] << "\n";
  }
  write_text_file(path, out.str());
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Dataset ds;
  ds.descriptor = descriptor_from_json(parse_header_comment(in, kDatasetSchema));

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("missing column header in " + path);
  std::vector<std::vector<double>> features;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != static_cast<std::size_t>(ds.descriptor.d) + 1) {
      throw std::runtime_error("bad dataset row width in " + path);
    }
    std::vector<double> x(ds.descriptor.d);
    for (int j = 0; j < ds.descriptor.d; ++j) x[j] = parse_double(fields[j]);
    features.push_back(std::move(x));
    ds.labels.push_back(std::stoi(fields.back()));
  }
  ds.inputs = Matrix(features.size(), ds.descriptor.d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::copy(features[i].begin(), features[i].end(), ds.inputs.row(i));
  }
  ds.descriptor.n = features.size();
  return ds;
}

void write_prediction_log_csv(const std::string& path, const PredictionLog& log) {
  std::ostringstream out;
  out << "# " << nlohmann::json{{"schema", kPredLogSchema}, {"k", log.n_classes}}.dump()
      << "\n";
  for (int k = 0; k < log.n_classes; ++k) out << "logit" << k << ",";
  out << "label,ood\n";
  for (const auto& rec : log.records) {
    for (double z : rec.logits) out << format_double(z) << ",";
    if (rec.label) out << *rec.label;
    out << "," << (rec.ood ? 1 : 0) << "\n";
  }
  write_text_file(path, out.str());
}

PredictionLog read_prediction_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const nlohmann::json header = parse_header_comment(in, kPredLogSchema);
  const int k = header.at("k").get<int>();

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("missing column header in " + path);

  PredictionLog log;
  log.n_classes = k;
  std::vector<std::vector<double>> labeled_logits;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != static_cast<std::size_t>(k) + 2) {
      throw std::runtime_error("bad log row width in " + path);
    }
    Matrix z(1, k);
    for (int j = 0; j < k; ++j) z.data()[j] = parse_double(fields[j]);
    const bool ood = fields[k + 1] == "1";
    if (fields[k].empty()) {
      if (!ood) throw std::runtime_error("unlabeled non-OOD row in " + path);
      append_ood_rows(log, z);
    } else {
      append_labeled_rows(log, z, {std::stoi(fields[k])});
      if (ood) log.records.back().ood = true;
    }
  }
  return log;
}

nlohmann::json prediction_log_to_json(const PredictionLog& log) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& rec : log.records) {
    nlohmann::json s{{"logits", rec.logits}, {"ood", rec.ood}};
    if (rec.label) {
      s["label"] = *rec.label;
    } else {
      s["label"] = nullptr;
    }
    samples.push_back(std::move(s));
  }
  return nlohmann::json{
      {"schema", kPredLogSchema}, {"k", log.n_classes}, {"samples", std::move(samples)}};
}

PredictionLog prediction_log_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kPredLogSchema) {
    throw std::runtime_error("prediction log schema mismatch");
  }
  PredictionLog log;
  log.n_classes = j.at("k").get<int>();
  for (const auto& s : j.at("samples")) {
    const auto logits = s.at("logits").get<std::vector<double>>();
    if (logits.size() != static_cast<std::size_t>(log.n_classes)) {
      throw std::runtime_error("prediction log row width mismatch");
    }
    Matrix z(1, log.n_classes);
    std::copy(logits.begin(), logits.end(), z.data());
    if (s.at("label").is_null()) {
      append_ood_rows(log, z);
      log.records.back().ood = s.at("ood").get<bool>();
    } else {
      append_labeled_rows(log, z, {s.at("label").get<int>()});
      log.records.back().ood = s.at("ood").get<bool>();
    }
  }
  return log;
}

void write_prediction_log_json(const std::string& path, const PredictionLog& log) {
  write_json_file(path, prediction_log_to_json(log));
}

PredictionLog read_prediction_log_json(const std::string& path) {
  return prediction_log_from_json(read_json_file(path));
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ostringstream out;
  out << "# "
      << nlohmann::json{{"schema", kHistorySchema},
                        {"status", history.status == RunStatus::kOk          ? "ok"
                                   : history.status == RunStatus::kCollapsed ? "collapsed"
                                                                             : "diverged"},
                        {"diverged_epoch", history.diverged_epoch}}
             .dump()
      << "\n";
  out << "epoch,lr,train_nll,test_nll,train_accuracy,test_accuracy,"
         "train_l2_norm,test_l2_norm,train_max_log_prob,test_max_log_prob,"
         "test_ece,test_ecd,param_sq_norm\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << "," << format_double(r.lr) << "," << format_double(r.train_nll) << ","
        << format_double(r.test_nll) << "," << format_double(r.train_accuracy) << ","
        << format_double(r.test_accuracy) << "," << format_double(r.train_l2_norm) << ","
        << format_double(r.test_l2_norm) << "," << format_double(r.train_max_log_prob) << ","
        << format_double(r.test_max_log_prob) << "," << format_double(r.test_ece) << ","
        << format_double(r.test_ecd) << "," << format_double(r.param_sq_norm) << "\n";
  }
  write_text_file(path, out.str());
}

nlohmann::json history_to_json(const TrainHistory& history) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : history.epochs) {
    epochs.push_back(nlohmann::json{{"epoch", r.epoch},
                                    {"lr", r.lr},
                                    {"train_nll", r.train_nll},
                                    {"test_nll", r.test_nll},
                                    {"train_accuracy", r.train_accuracy},
                                    {"test_accuracy", r.test_accuracy},
                                    {"train_l2_norm", r.train_l2_norm},
                                    {"test_l2_norm", r.test_l2_norm},
                                    {"train_max_log_prob", r.train_max_log_prob},
                                    {"test_max_log_prob", r.test_max_log_prob},
                                    {"test_ece", r.test_ece},
                                    {"test_ecd", r.test_ecd},
                                    {"param_sq_norm", r.param_sq_norm}});
  }
  return nlohmann::json{{"schema", kHistorySchema},
                        {"status", history.status == RunStatus::kOk          ? "ok"
                                   : history.status == RunStatus::kCollapsed ? "collapsed"
                                                                             : "diverged"},
                        {"diverged_epoch", history.diverged_epoch},
                        {"epochs", std::move(epochs)}};
}

void save_network(const std::string& path, const Network& net) {
  std::ostringstream out;
  out << kNetworkMagic << "\n";
  out << "activation " << activation_name(net.activation()) << "\n";
  out << "dropout " << format_double(net.dropout_rate()) << "\n";
  out << "layers " << net.n_layers() << "\n";
  out << "dims";
  out << " " << net.layers().front().weight.rows();
  for (const auto& layer : net.layers()) out << " " << layer.weight.cols();
  out << "\n";
  for (std::size_t li = 0; li < net.n_layers(); ++li) {
    const auto& layer = net.layers()[li];
    out << "layer " << li << "\n";
    out << "bias";
    for (double b : layer.bias) out << " " << format_double(b);
    out << "\n";
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const double* row = layer.weight.row(r);
      for (std::size_t c = 0; c < layer.weight.cols(); ++c) {
        out << (c == 0 ? "" : " ") << format_double(row[c]);
      }
      out << "\n";
    }
  }
  write_text_file(path, out.str());
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line, word;
  if (!std::getline(in, line) || line != kNetworkMagic) {
    throw std::runtime_error("not a calibreg network file: " + path);
  }
  std::string activation_word;
  in >> word >> activation_word;
  if (word != "activation") throw std::runtime_error("bad network file: " + path);
  double dropout = 0.0;
  in >> word >> dropout;
  if (word != "dropout") throw std::runtime_error("bad network file: " + path);
  std::size_t n_layers = 0;
  in >> word >> n_layers;
  if (word != "layers" || n_layers == 0) throw std::runtime_error("bad network file: " + path);
  in >> word;
  if (word != "dims") throw std::runtime_error("bad network file: " + path);
  std::vector<std::size_t> dims(n_layers + 1);
  for (auto& d : dims) in >> d;

  std::vector<DenseLayer> layers;
  for (std::size_t li = 0; li < n_layers; ++li) {
    std::size_t index = 0;
    in >> word >> index;
    if (word != "layer" || index != li) throw std::runtime_error("bad network file: " + path);
    DenseLayer layer;
    layer.bias.resize(dims[li + 1]);
    in >> word;
    if (word != "bias") throw std::runtime_error("bad network file: " + path);
    for (auto& b : layer.bias) in >> b;
    layer.weight = Matrix(dims[li], dims[li + 1]);
    for (std::size_t i = 0; i < layer.weight.size(); ++i) in >> layer.weight.data()[i];
    layers.push_back(std::move(layer));
  }
  if (!in) throw std::runtime_error("truncated network file: " + path);
  return Network(std::move(layers), activation_from_name(activation_word), dropout);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::string& path) {
  return nlohmann::json::parse(read_text_file(path));
}

}  // namespace calibreg
