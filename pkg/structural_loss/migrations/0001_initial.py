# Generated by Django 5.2.3 on 2026-10-19 09:12

import django.core.validators
import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('loss_kind', models.CharField(choices=[('ce', 'Softmax cross entropy'), ('bce', 'Sigmoid cross entropy'), ('ssim', 'SSIM loss'), ('ssim_ms', 'Mean-subtracted SSIM loss'), ('ssl', 'Structural similarity loss'), ('combined', 'Cross entropy + SSL')], max_length=20)),
                ('seed', models.BigIntegerField(default=0)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('final_loss', models.FloatField(blank=True, null=True)),
                ('val_miou', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('val_pixel_accuracy', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('error_message', models.TextField(blank=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='AblationResult',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('axis', models.CharField(choices=[('beta', 'Hard-example threshold beta'), ('sigma', 'Gaussian window sigma'), ('region_size', 'Window size k'), ('ohem', 'Hard example mining'), ('reweight', 'Error reweighting'), ('loss_kind', 'Loss function')], max_length=20)),
                ('value', models.CharField(max_length=50)),
                ('seed', models.BigIntegerField()),
                ('val_miou', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('mean_hard_proportion', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='ablation_results', to='structural_loss.trainingrun')),
            ],
            options={
                'ordering': ['axis', 'value', 'seed'],
            },
        ),
    ]
