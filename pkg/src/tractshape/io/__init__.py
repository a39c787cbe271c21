from .cluster import (
    CHANNELS,
    N_CLUSTERS,
    FiberCluster,
    LayoutConfig,
    PhenotypeRecord,
    SubjectData,
    attach_scalars,
    load_subject,
    write_subject,
)
from .tables import (
    load_phenotypes,
    read_feature_csv,
    write_feature_csv,
    write_phenotypes,
)
from .tck import parse_tck, parse_tsf, write_tck, write_tsf
