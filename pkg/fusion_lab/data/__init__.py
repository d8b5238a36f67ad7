from fusion_lab.data.cache import available_folds, dataset_hash, load_catalog, load_dataset, save_catalog, save_dataset
from fusion_lab.data.folds import Fold, RatingArrays, build_folds, catalog_from_link, make_tuning_split, to_arrays
from fusion_lab.data.genome import FeatureCatalog, LinkReport, link_movies, load_genome, load_ml20m_titles
from fusion_lab.data.movielens import RatingRecord, load_item_catalog, load_official_folds, load_ratings, read_rating_file
