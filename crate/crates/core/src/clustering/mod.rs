//! The four clustering algorithms: dominant sets, DBSCAN, k-means and
//! k-medoids (PAM).

pub mod dbscan;
pub mod dominant;
pub mod kmeans;
pub mod kmedoids;

pub use dbscan::{dbscan, DBSCANParams};
pub use dominant::{
    dominant_set_clustering, extract_dominant_set, replicator_step, DominantSet, DsClustering, DsParams,
    ReplicatorState,
};
pub use kmeans::{kmeans, KMeansResult, KMeansRun, KParams};
pub use kmedoids::{kmedoids, KMedoidsResult};
