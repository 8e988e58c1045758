from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# The project exposes no HTTP surface; the key only satisfies Django's checks.
SECRET_KEY = 'fogfed-offline-simulator-key'

DEBUG = False

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'core',
]

# Database
# Run registry only; simulation artifacts on disk are the reproducibility contract.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'fogfed.sqlite3',
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

# Paths
FOGFED_OUTPUT_DIR = BASE_DIR / 'output'
UCI_HAR_DIR = BASE_DIR / 'data' / 'UCI HAR Dataset'

# Simulation defaults (precedence: command-line flag > config file > these values)
SIMULATION_DEFAULTS = {
    'clients': 10,                 # fog clients K
    'rounds': 1,                   # federated rounds per sweep entry
    'epochs': 10,
    'batch': 8,
    'lr': 0.01,
    'momentum': 0.9,
    'boost': 2.0,                  # unnormalized mass of the best-accuracy client
    'seed': 2022,
    'partition': 'replicate',      # replicate | iid
    'sweep': None,                 # None -> 1..clients
    'trusted_ids': None,           # None -> server 0 plus fog clients 1..K
    'intruder_ids': [],
    'update_times': None,          # None -> seeded log-normal
    'update_time_mu': 3.0,         # log-seconds
    'update_time_sigma': 0.25,
    'measure_update_times': False,
    'identical_client_seeds': False,
    'workers': 1,                  # parallel client training jobs
    'data_dir': None,              # None -> synthetic dataset
    'synthetic_instances': 600,
    'synthetic_features': 20,
    'synthetic_classes': 6,
    'out_dir': str(FOGFED_OUTPUT_DIR),
    'chain_file': None,            # None -> <out_dir>/chain.fgch
    'conv_filters': [32, 16],
    'conv_kernels': [7, 5],
    'pool_size': 2,
    'dense_units': [64],
}
