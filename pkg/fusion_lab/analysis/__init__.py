from fusion_lab.analysis.clustering import Clustering, kmeans, sample_clusters
from fusion_lab.analysis.profiles import CentroidProfile, centroid_profile, format_profiles, profiles_frame, save_profiles
