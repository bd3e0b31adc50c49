//! Merchant-category correlation network, its communities, and the
//! demographic feature sets of categories.

mod community;
mod features;
mod kmeans;
mod table;

pub use community::{louvain, modularity, nmi, threshold_graph, CategoryGraph, Communities};
pub use features::{
    average_feature_set, community_feature_sets, feature_correlations, pearson, AfsWeighting, CategoryFeatures,
    Correlation, FeatureCorrelations, WeightedSum,
};
pub use kmeans::{
    calinski_harabasz, davies_bouldin, kmeans, kmeans_with_selection, standardize, KCriteria, KMeansFit, KMeansOptions,
    KSelection,
};
pub use table::{category_correlation, category_spend_table, CategorySpendTable, CorrelationMatrix, MeanScope};
