from django import forms
from django.core.exceptions import ValidationError

from .dataset import SHARD_MODES

MAX_SEED = 2 ** 63 - 1


def _int_list(value, name, minimum=0, allow_empty=True):
    if value is None:
        return None
    if not isinstance(value, list):
        raise ValidationError(f"{name} must be a list of integers")
    for item in value:
        if isinstance(item, bool) or not isinstance(item, int) or item < minimum:
            raise ValidationError(f"{name} entries must be integers >= {minimum}, got {item!r}")
    if not allow_empty and not value:
        raise ValidationError(f"{name} must not be empty")
    return value


class SimulationConfigForm(forms.Form):
    """Validates a merged configuration document (defaults < file < flags)"""
    clients = forms.IntegerField(min_value=1)
    rounds = forms.IntegerField(min_value=1)
    epochs = forms.IntegerField(min_value=1)
    batch = forms.IntegerField(min_value=1)
    lr = forms.FloatField(min_value=0.0)
    momentum = forms.FloatField(min_value=0.0, max_value=0.999999)
    boost = forms.FloatField(min_value=1.0)
    seed = forms.IntegerField(min_value=0, max_value=MAX_SEED)
    partition = forms.ChoiceField(choices=[(mode, mode) for mode in SHARD_MODES])
    sweep = forms.JSONField(required=False)
    trusted_ids = forms.JSONField(required=False)
    intruder_ids = forms.JSONField(required=False)
    update_times = forms.JSONField(required=False)
    update_time_mu = forms.FloatField()
    update_time_sigma = forms.FloatField(min_value=0.0)
    measure_update_times = forms.BooleanField(required=False)
    identical_client_seeds = forms.BooleanField(required=False)
    workers = forms.IntegerField(min_value=1)
    data_dir = forms.CharField(required=False)
    synthetic_instances = forms.IntegerField(min_value=2)
    synthetic_features = forms.IntegerField(min_value=1)
    synthetic_classes = forms.IntegerField(min_value=2)
    out_dir = forms.CharField()
    chain_file = forms.CharField(required=False)
    conv_filters = forms.JSONField(required=False)
    conv_kernels = forms.JSONField(required=False)
    pool_size = forms.IntegerField(min_value=1)
    dense_units = forms.JSONField(required=False)

    def clean_lr(self):
        lr = self.cleaned_data['lr']
        if lr <= 0:
            raise ValidationError("lr must be positive")
        return lr

    def clean_sweep(self):
        sweep = _int_list(self.cleaned_data.get('sweep'), 'sweep', minimum=1, allow_empty=False)
        if sweep is not None and len(set(sweep)) != len(sweep):
            raise ValidationError(f"sweep entries must be distinct, got {sweep}")
        return sweep

    def clean_trusted_ids(self):
        return _int_list(self.cleaned_data.get('trusted_ids'), 'trusted_ids')

    def clean_intruder_ids(self):
        return _int_list(self.cleaned_data.get('intruder_ids'), 'intruder_ids') or []

    def clean_update_times(self):
        times = self.cleaned_data.get('update_times')
        if times is None:
            return None
        if not isinstance(times, list) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in times
        ):
            raise ValidationError("update_times must be a list of positive numbers")
        return [float(t) for t in times]

    def clean_conv_filters(self):
        return _int_list(self.cleaned_data.get('conv_filters'), 'conv_filters', minimum=1) or []

    def clean_conv_kernels(self):
        return _int_list(self.cleaned_data.get('conv_kernels'), 'conv_kernels', minimum=1) or []

    def clean_dense_units(self):
        return _int_list(self.cleaned_data.get('dense_units'), 'dense_units', minimum=1) or []

    def clean(self):
        cleaned_data = super().clean()
        clients = cleaned_data.get('clients')
        trusted = cleaned_data.get('trusted_ids')
        intruders = cleaned_data.get('intruder_ids') or []

        if trusted is not None and clients:
            missing = sorted(set(range(1, clients + 1)) - set(trusted))
            if missing:
                raise ValidationError(f"trusted_ids must include every fog client, missing {missing}")
        if trusted is not None and set(trusted) & set(intruders):
            raise ValidationError("trusted_ids and intruder_ids must be disjoint")
        if trusted is None and clients and any(i <= clients for i in intruders):
            raise ValidationError(
                f"intruder_ids must lie outside the default trusted ids 0..{clients}"
            )

        sweep = cleaned_data.get('sweep')
        if sweep and clients and max(sweep) > clients:
            raise ValidationError(f"sweep entries must not exceed clients={clients}")

        times = cleaned_data.get('update_times')
        if times is not None and clients and len(times) != clients:
            raise ValidationError("update_times needs exactly one entry per fog client")

        if len(cleaned_data.get('conv_filters') or []) != len(cleaned_data.get('conv_kernels') or []):
            raise ValidationError("conv_filters and conv_kernels must have the same length")

        return cleaned_data
