#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecw/constraints.hpp"
#include "ecw/hamiltonian.hpp"
#include "ecw/types.hpp"

namespace ecw::io {

struct PropertyFile {
  std::vector<PropertyOperator> properties;
  std::optional<Mat> overlap;  // non-identity basis overlap, if supplied
};

/// properties.json:
///   { "properties": [ {"id", "kind", "hermitian", "matrix": [row-major]} ],
///     "overlap": [row-major] }           (overlap optional)
/// Matrices must be M x M for the Hamiltonian's spin-orbital count; flagged
/// Hermitian matrices are checked to 1e-12.
PropertyFile load_properties(const std::string& path, int n_spin_orbitals);
void save_properties(const PropertyFile& pf, const std::string& path);

/// experiment.json:
///   { "ortho_weight": w,
///     "data": [ {"property","bra","ket","value","sigma","loss","weight"} ] }
constraints::ConstraintSet load_experiment(const std::string& path);
void save_experiment(const constraints::ConstraintSet& cs, const std::string& path);

}  // namespace ecw::io
